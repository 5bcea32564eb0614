//! DC surrogate construction and the minimax convex-concave optimizer.
//!
//! The worst-case objective `V(θ) = max_{R ∈ [l,u]^n} Σ R_i ψ_i(θ) / Σ R_i`
//! is a difference of convex functions. With the policy split
//! `π = g̃ - h̃` and `ψ_i = α_i·π + β_i`, each score splits as
//!
//! ```text
//! α_i ≥ 0:  g_i = α_i·g̃ + β_i,    h_i = α_i·h̃
//! α_i < 0:  g_i = |α_i|·h̃ + β_i,  h_i = |α_i|·g̃
//! ```
//!
//! and `V(θ) = [V(θ) + Σ c_i·h_i(θ)] - Σ c_i·h_i(θ)` with both brackets
//! convex for the combinatorial constants
//!
//! ```text
//! c_i = l·Σ_{k=1..i} 1/((n-k+1)l + (k-1)u) + u·Σ_{k=i+1..n} 1/((n-k+1)l + (k-1)u),
//! ```
//!
//! which satisfy `Σ c_i = n`. The constants index sorted score positions; the
//! assignment to samples is frozen at each outer iterate (re-sorting inside
//! an inner solve would break convexity of the surrogate, while any fixed
//! nonnegative weighting preserves the majorization that drives descent).
//!
//! Each outer step linearizes the concave part and minimizes
//!
//! ```text
//! F_k(θ) = V(θ) + Σ_i c_i·(h_i(θ) - ⟨θ, ∇h_i(θ_k)⟩)
//! ```
//!
//! over the parameter box with a monotone spectral projected-gradient
//! method. Since `F_k` majorizes the objective up to a constant and touches
//! it at `θ_k`, any inner step that does not exceed the warm start value
//! yields monotone descent of the true worst-case objective; the descent is
//! asserted at runtime and a violation is reported as an implementation bug.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use crate::dataset::TrialDataset;
use crate::nuisance::ScoreVector;
use crate::policy::{link_deriv, link_prob, scalar_pieces, PolicyParams, PolicySpec};
use crate::worstcase::{worst_case_value, UncertaintySet};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "descent violation at outer iteration {outer}: objective rose from \
         {previous:.12e} to {current:.12e} (tolerance {tol:.3e}); this indicates \
         an implementation bug in the surrogate"
    )]
    DescentViolation {
        outer: usize,
        previous: f64,
        current: f64,
        tol: f64,
    },
    #[error("inner solver returned a surrogate value above its warm start: {start:.12e} -> {end:.12e}")]
    InnerRegression { start: f64, end: f64 },
    #[error("invalid optimizer config: {0}")]
    BadConfig(String),
}

/// Optimizer configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct MmccpConfig {
    /// Outer stopping threshold on `‖θ^k - θ^{k-1}‖`.
    pub delta_tol: f64,
    pub max_outer: usize,
    pub inner_max_iters: usize,
    /// Inner stop on the projected-gradient norm.
    pub inner_grad_tol: f64,
    pub restarts: usize,
    /// Per-coordinate standard deviation of the starting points.
    pub init_sd: f64,
}

impl Default for MmccpConfig {
    fn default() -> Self {
        Self {
            delta_tol: 1e-4,
            max_outer: 200,
            inner_max_iters: 500,
            inner_grad_tol: 1e-6,
            restarts: 5,
            init_sd: 0.1f64.sqrt(),
        }
    }
}

impl MmccpConfig {
    fn check(&self) -> Result<(), SolveError> {
        if !(self.delta_tol > 0.0) {
            return Err(SolveError::BadConfig("delta_tol must be positive".into()));
        }
        if self.max_outer == 0 || self.inner_max_iters == 0 || self.restarts == 0 {
            return Err(SolveError::BadConfig(
                "max_outer, inner_max_iters and restarts must be positive".into(),
            ));
        }
        if !(self.inner_grad_tol > 0.0) || !(self.init_sd > 0.0) {
            return Err(SolveError::BadConfig(
                "inner_grad_tol and init_sd must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Allowed objective increase per outer step before it counts as a
    /// descent violation.
    pub fn descent_tol(&self) -> f64 {
        10.0 * self.inner_grad_tol
    }
}

/// Optimization result for one call (best restart).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmccpResult {
    pub theta: PolicyParams,
    /// Worst-case objective after each outer iteration, starting at `θ^0`.
    pub trace: Vec<f64>,
    /// `‖θ^k - θ^{k-1}‖` for each outer iteration.
    pub step_norms: Vec<f64>,
    pub outer_iters: usize,
    pub converged: bool,
    /// Count of descent violations beyond tolerance; always zero in a
    /// returned result (a violation aborts the solve).
    pub descent_violations: usize,
    /// Which restart produced this result.
    pub restart: usize,
}

impl MmccpResult {
    /// Final worst-case objective value.
    pub fn final_value(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }

    /// Writes the convergence trace as CSV (iteration, worst_case_value,
    /// step_norm). Step norm is empty for the starting point.
    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "iteration,worst_case_value,step_norm")?;
        for (k, value) in self.trace.iter().enumerate() {
            if k == 0 {
                writeln!(w, "0,{value},")?;
            } else {
                writeln!(w, "{k},{value},{}", self.step_norms[k - 1])?;
            }
        }
        w.flush()
    }
}

/// Combinatorial surrogate constants in sorted-score order, `Σ c_i = n`.
pub fn surrogate_c(set: &UncertaintySet, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    let (l, u) = (set.l, set.u);
    // inv[k-1] = 1 / ((n-k+1)l + (k-1)u) for k = 1..=n
    let inv: Vec<f64> = (1..=n)
        .map(|k| 1.0 / ((n - k + 1) as f64 * l + (k - 1) as f64 * u))
        .collect();
    let total: f64 = inv.iter().sum();
    let mut c = Vec::with_capacity(n);
    let mut prefix = 0.0;
    for i in 1..=n {
        prefix += inv[i - 1];
        c.push(l * prefix + u * (total - prefix));
    }
    c
}

/// Convex split of one score as a function of θ.
#[derive(Debug, Clone)]
pub struct SplitPieces {
    pub g: f64,
    pub h: f64,
    pub grad_h: Vec<f64>,
}

/// DC split of `ψ_i(θ) = α_i·π(x, θ) + β_i` into convex `g_i - h_i`.
pub fn dc_split(
    scores: &ScoreVector,
    index: usize,
    spec: &PolicySpec,
    theta: &[f64],
    x: &[f64],
) -> SplitPieces {
    let alpha = scores.alpha[index];
    let beta = scores.beta[index];
    let z = crate::policy::dot(theta, x);
    let (gt, ht, dgt, dht) = scalar_pieces(spec.kind, z, spec.lambda);
    let pos = alpha.max(0.0);
    let neg = (-alpha).max(0.0);
    let g = pos * gt + neg * ht + beta;
    let h = pos * ht + neg * gt;
    let dh_dz = pos * dht + neg * dgt;
    SplitPieces {
        g,
        h,
        grad_h: x.iter().map(|&xi| dh_dz * xi).collect(),
    }
}

/// Immutable worst-case objective over one dataset: scores, uncertainty set,
/// policy class and the surrogate constants.
#[derive(Debug)]
pub struct DcObjective<'a> {
    pub scores: &'a ScoreVector,
    pub set: UncertaintySet,
    pub spec: PolicySpec,
    pub data: &'a TrialDataset,
    /// Surrogate constants, indexed by sorted score position.
    pub c: Vec<f64>,
}

impl<'a> DcObjective<'a> {
    pub fn new(
        scores: &'a ScoreVector,
        set: UncertaintySet,
        spec: PolicySpec,
        data: &'a TrialDataset,
    ) -> Self {
        assert_eq!(scores.len(), data.n(), "scores and dataset disagree on n");
        assert_eq!(spec.dim, data.dim(), "policy and dataset disagree on d");
        let c = surrogate_c(&set, data.n());
        Self {
            scores,
            set,
            spec,
            data,
            c,
        }
    }

    fn indices(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.data.n())
            .map(|i| crate::policy::dot(theta, self.data.row(i)))
            .collect()
    }

    /// Per-sample scores at θ.
    pub fn psi(&self, theta: &[f64]) -> Vec<f64> {
        let kind = self.spec.kind;
        self.indices(theta)
            .iter()
            .enumerate()
            .map(|(i, &z)| self.scores.psi_i(i, link_prob(kind, z)))
            .collect()
    }

    /// Worst-case objective value and a subgradient at θ.
    ///
    /// The subgradient is `Σ R*_i ∇ψ_i / Σ R*_i` at the maximizing ratio
    /// vector `R*`; it is a gradient wherever the maximizer is locally
    /// constant (almost everywhere).
    pub fn objective(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let kind = self.spec.kind;
        let zs = self.indices(theta);
        let psi: Vec<f64> = zs
            .iter()
            .enumerate()
            .map(|(i, &z)| self.scores.psi_i(i, link_prob(kind, z)))
            .collect();
        let sol = worst_case_value(&psi, &self.set);
        let weight_sum: f64 = sol.rn_at_opt.iter().sum();
        let mut grad = vec![0.0; self.spec.dim];
        for i in 0..self.data.n() {
            let scale = sol.rn_at_opt[i] * self.scores.alpha[i] * link_deriv(kind, zs[i]);
            for (gj, &xj) in grad.iter_mut().zip(self.data.row(i)) {
                *gj += scale * xj;
            }
        }
        for gj in &mut grad {
            *gj /= weight_sum;
        }
        (sol.value, grad)
    }

    /// Builds the convex surrogate around the expansion point `θ_k`: the
    /// constants are assigned to samples by the sort order of `ψ(θ_k)` and
    /// the concave part is linearized there.
    pub fn linearize(&self, theta_k: &[f64]) -> Surrogate<'_, 'a> {
        let psi_k = self.psi(theta_k);
        let sol = worst_case_value(&psi_k, &self.set);
        let mut c_by_sample = vec![0.0; psi_k.len()];
        for (rank, &orig) in sol.sort_permutation.iter().enumerate() {
            c_by_sample[orig] = self.c[rank];
        }

        let kind = self.spec.kind;
        let lambda = self.spec.lambda;
        let mut lin = vec![0.0; self.spec.dim];
        for i in 0..self.data.n() {
            let x = self.data.row(i);
            let z = crate::policy::dot(theta_k, x);
            let (_, _, dgt, dht) = scalar_pieces(kind, z, lambda);
            let alpha = self.scores.alpha[i];
            let dh_dz = alpha.max(0.0) * dht + (-alpha).max(0.0) * dgt;
            let scale = c_by_sample[i] * dh_dz;
            for (lj, &xj) in lin.iter_mut().zip(x) {
                *lj += scale * xj;
            }
        }

        Surrogate {
            dc: self,
            c_by_sample,
            lin,
        }
    }
}

/// Convex surrogate `F_k` for one outer iteration.
pub struct Surrogate<'s, 'a> {
    dc: &'s DcObjective<'a>,
    /// Surrogate constants mapped to original sample order.
    pub c_by_sample: Vec<f64>,
    /// Linearization vector `Σ_i c_i ∇h_i(θ_k)`.
    pub lin: Vec<f64>,
}

impl Surrogate<'_, '_> {
    /// Surrogate value and subgradient at θ.
    pub fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let dc = self.dc;
        let kind = dc.spec.kind;
        let lambda = dc.spec.lambda;
        let n = dc.data.n();
        let d = dc.spec.dim;

        let mut psi = vec![0.0; n];
        let mut h_sum = 0.0;
        let mut grad = vec![0.0; d];
        let mut dpsi_scale = vec![0.0; n];
        for i in 0..n {
            let x = dc.data.row(i);
            let z = crate::policy::dot(theta, x);
            let (gt, ht, dgt, dht) = scalar_pieces(kind, z, lambda);
            let alpha = dc.scores.alpha[i];
            let pos = alpha.max(0.0);
            let neg = (-alpha).max(0.0);
            psi[i] = dc.scores.psi_i(i, link_prob(kind, z));
            dpsi_scale[i] = alpha * link_deriv(kind, z);
            let c = self.c_by_sample[i];
            h_sum += c * (pos * ht + neg * gt);
            let dh_dz = c * (pos * dht + neg * dgt);
            for (gj, &xj) in grad.iter_mut().zip(x) {
                *gj += dh_dz * xj;
            }
        }

        let sol = worst_case_value(&psi, &dc.set);
        let weight_sum: f64 = sol.rn_at_opt.iter().sum();
        for i in 0..n {
            let scale = sol.rn_at_opt[i] * dpsi_scale[i] / weight_sum;
            for (gj, &xj) in grad.iter_mut().zip(dc.data.row(i)) {
                *gj += scale * xj;
            }
        }

        let mut value = sol.value + h_sum;
        for j in 0..d {
            value -= theta[j] * self.lin[j];
            grad[j] -= self.lin[j];
        }
        (value, grad)
    }
}

/// Result of a box-constrained descent run.
#[derive(Debug, Clone)]
pub struct BoxSolve {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Monotone spectral projected-gradient descent over `[-bound, bound]^d`.
///
/// Accepts only steps that satisfy an Armijo decrease, so the returned value
/// never exceeds the warm-start value. Stops when the unit-step projected
/// gradient norm falls below `grad_tol`, when no descent step is found
/// (stationary or at a kink), or when the budget runs out.
pub fn solve_box<F>(
    eval: F,
    x0: &[f64],
    bound: f64,
    max_iters: usize,
    grad_tol: f64,
) -> BoxSolve
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const ARMIJO_C1: f64 = 1e-4;
    const STEP_MIN: f64 = 1e-12;
    const BB_MIN: f64 = 1e-10;
    const BB_MAX: f64 = 1e10;

    let project = |v: &mut [f64]| {
        for vi in v.iter_mut() {
            *vi = vi.clamp(-bound, bound);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let (mut f, mut g) = eval(&x);
    let d = x.len();
    let mut bb_step = 1.0;
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..max_iters {
        // Unit-step projected gradient as the stationarity measure.
        let pg_norm: f64 = (0..d)
            .map(|j| {
                let moved = (x[j] - g[j]).clamp(-bound, bound);
                (x[j] - moved).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if pg_norm < grad_tol {
            converged = true;
            break;
        }

        let mut dir = vec![0.0; d];
        for j in 0..d {
            let target = (x[j] - bb_step * g[j]).clamp(-bound, bound);
            dir[j] = target - x[j];
        }
        let gd: f64 = g.iter().zip(&dir).map(|(gi, di)| gi * di).sum();
        if gd >= 0.0 {
            // Not a descent direction (kink or numerically stationary).
            break;
        }

        let mut t = 1.0;
        let mut accepted = None;
        while t >= STEP_MIN {
            let xt: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect();
            let (ft, gt_) = eval(&xt);
            if ft <= f + ARMIJO_C1 * t * gd {
                accepted = Some((xt, ft, gt_));
                break;
            }
            t *= 0.5;
        }
        let Some((xt, ft, gt_)) = accepted else {
            break;
        };

        let mut sy = 0.0;
        let mut ss = 0.0;
        for j in 0..d {
            let s = xt[j] - x[j];
            let y = gt_[j] - g[j];
            sy += s * y;
            ss += s * s;
        }
        bb_step = if sy > 1e-16 {
            (ss / sy).clamp(BB_MIN, BB_MAX)
        } else {
            BB_MAX
        };

        x = xt;
        f = ft;
        g = gt_;
        iters += 1;
    }

    BoxSolve {
        x,
        value: f,
        iters,
        converged,
    }
}

/// One convex-concave step: minimizes the surrogate built at `theta_k` over
/// the box and returns the next iterate.
///
/// Contract: the surrogate value at the returned point never exceeds its
/// warm-start value.
pub fn inner_solve(
    dc: &DcObjective<'_>,
    theta_k: &[f64],
    cfg: &MmccpConfig,
) -> Result<Vec<f64>, SolveError> {
    let surrogate = dc.linearize(theta_k);
    let (start, _) = surrogate.eval(theta_k);
    let solved = solve_box(
        |t| surrogate.eval(t),
        theta_k,
        dc.spec.box_bound,
        cfg.inner_max_iters,
        cfg.inner_grad_tol,
    );
    if solved.value > start + 1e-9 * (1.0 + start.abs()) {
        return Err(SolveError::InnerRegression {
            start,
            end: solved.value,
        });
    }
    Ok(solved.x)
}

fn draw_start(rng: &mut ChaCha12Rng, dim: usize, sd: f64, bound: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (sd * z).clamp(-bound, bound)
        })
        .collect()
}

fn run_single_start(
    dc: &DcObjective<'_>,
    cfg: &MmccpConfig,
    theta0: Vec<f64>,
    restart: usize,
) -> Result<MmccpResult, SolveError> {
    let mut theta = theta0;
    let (mut value, _) = dc.objective(&theta);
    let mut trace = vec![value];
    let mut step_norms = Vec::new();
    let mut converged = false;
    let mut outer_iters = 0;
    let descent_tol = cfg.descent_tol();

    for outer in 1..=cfg.max_outer {
        let next = inner_solve(dc, &theta, cfg)?;
        let (next_value, _) = dc.objective(&next);
        if next_value > value + descent_tol {
            return Err(SolveError::DescentViolation {
                outer,
                previous: value,
                current: next_value,
                tol: descent_tol,
            });
        }
        let step: f64 = theta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        trace.push(next_value);
        step_norms.push(step);
        theta = next;
        value = next_value;
        outer_iters = outer;
        if step < cfg.delta_tol {
            converged = true;
            break;
        }
    }

    Ok(MmccpResult {
        theta: PolicyParams::new(theta),
        trace,
        step_norms,
        outer_iters,
        converged,
        descent_violations: 0,
        restart,
    })
}

/// Multi-start minimax convex-concave procedure.
///
/// Each restart starts from `θ^0 ~ N_d(0, init_sd²·I)` and iterates inner
/// solves until the step norm drops below `delta_tol`. Returns the restart
/// with the lowest final worst-case value (ties: lowest restart index).
pub fn mmccp(
    dc: &DcObjective<'_>,
    cfg: &MmccpConfig,
    seed: u64,
) -> Result<MmccpResult, SolveError> {
    cfg.check()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best: Option<MmccpResult> = None;
    for restart in 0..cfg.restarts {
        let theta0 = draw_start(&mut rng, dc.spec.dim, cfg.init_sd, dc.spec.box_bound);
        let result = run_single_start(dc, cfg, theta0, restart)?;
        let better = match &best {
            None => true,
            Some(b) => result.final_value() < b.final_value(),
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Direct minimization of the plain (Γ = 1) estimator `mean_i ψ_i(θ)` with
/// the same multi-start projected-gradient machinery but no DC surrogate.
pub fn minimize_plain(
    scores: &ScoreVector,
    spec: &PolicySpec,
    data: &TrialDataset,
    cfg: &MmccpConfig,
    seed: u64,
) -> Result<MmccpResult, SolveError> {
    cfg.check()?;
    assert_eq!(scores.len(), data.n());
    let n = data.n();
    let kind = spec.kind;
    let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; spec.dim];
        for i in 0..n {
            let x = data.row(i);
            let z = crate::policy::dot(theta, x);
            value += scores.psi_i(i, link_prob(kind, z));
            let scale = scores.alpha[i] * link_deriv(kind, z);
            for (gj, &xj) in grad.iter_mut().zip(x) {
                *gj += scale * xj;
            }
        }
        value /= n as f64;
        for gj in &mut grad {
            *gj /= n as f64;
        }
        (value, grad)
    };

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut best: Option<MmccpResult> = None;
    // The plain path has no outer loop, so give it a comparable total budget.
    let budget = cfg.inner_max_iters.saturating_mul(40);
    for restart in 0..cfg.restarts {
        let theta0 = draw_start(&mut rng, spec.dim, cfg.init_sd, spec.box_bound);
        let (start_value, _) = eval(&theta0);
        let solved = solve_box(eval, &theta0, spec.box_bound, budget, cfg.inner_grad_tol);
        let result = MmccpResult {
            theta: PolicyParams::new(solved.x),
            trace: vec![start_value, solved.value],
            step_norms: vec![f64::NAN],
            outer_iters: solved.iters,
            converged: solved.converged,
            descent_violations: 0,
            restart,
        };
        let better = match &best {
            None => true,
            Some(b) => result.final_value() < b.final_value(),
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}
