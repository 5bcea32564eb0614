//! Diagnostic probe for the synthetic benchmark pipeline.

use oplgen::calibrate::{calibrate, CalibrationOptions};
use oplgen::dataset::{policy_regret, simulate, SimulationConfig};
use oplgen::dcopt::{mmccp, DcObjective, MmccpConfig};
use oplgen::nuisance::{build_scores, fit_nuisance, NuisanceOptions, ScoreMethod};
use oplgen::policy::{policy_prob, PolicySpec};
use oplgen::worstcase::bounds;

fn main() {
    let cfg = SimulationConfig {
        n_train: 2000,
        n_target: 50_000,
        seed: 1,
        ..SimulationConfig::default()
    };
    let sim = simulate(&cfg).unwrap();
    println!("acceptance_rate (oracle p_sel) = {:.4}", sim.acceptance_rate);

    let frac_neg_target = sim.target.iter().filter(|s| s.c_of_x < 0.0).count() as f64
        / sim.target.len() as f64;
    let frac_neg_train = sim.train_oracle.iter().filter(|s| s.c_of_x < 0.0).count() as f64
        / sim.train_oracle.len() as f64;
    println!("P(C<0): target={frac_neg_target:.3} train={frac_neg_train:.3}");

    let mut max_or = 1.0f64;
    let p = sim.acceptance_rate;
    for s in &sim.train_oracle {
        let or = (p / (1.0 - p)) / (s.selection_prob / (1.0 - s.selection_prob));
        max_or = max_or.max(or).max(1.0 / or);
    }
    println!("oracle two-sided odds-ratio range over train = {max_or:.2}");

    // Calibration on x2 (index 1).
    let train_col: Vec<f64> = sim.train_oracle.iter().map(|s| s.x[1]).collect();
    let target_col: Vec<f64> = sim.target.iter().map(|s| s.x[1]).collect();
    let cal = calibrate(&train_col, &target_col, &CalibrationOptions::default()).unwrap();
    println!("calibrated p_sel = {:.4}, gamma_hat = {:.3}", cal.p_sel, cal.gamma);

    let models = fit_nuisance(&sim.train, &NuisanceOptions::default()).unwrap();
    println!(
        "mu0 w = {:?} b = {:.3}",
        models.mu0.weights.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
        models.mu0.intercept
    );
    println!(
        "mu1 w = {:?} b = {:.3}",
        models.mu1.weights.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>(),
        models.mu1.intercept
    );

    let scores = build_scores(ScoreMethod::Dr, &sim.train, &models);
    let spec = PolicySpec::logistic(5);
    let mcfg = MmccpConfig::default();

    println!("\nregret all-treat = {:.4}", policy_regret(|_| 1.0, &sim.target));
    println!("regret no-treat  = {:.4}", policy_regret(|_| 0.0, &sim.target));

    // Convergence diagnostics at gamma = 4: step-norm history of one run.
    {
        let set = bounds(4.0, cal.p_sel).unwrap();
        let dc = DcObjective::new(&scores, set, spec, &sim.train);
        let res = mmccp(&dc, &mcfg, 1).unwrap();
        let tail: Vec<f64> = res
            .step_norms
            .iter()
            .rev()
            .take(12)
            .rev()
            .map(|v| (v * 1e6).round() / 1e6)
            .collect();
        println!("\nstep-norm tail at gamma=4: {tail:?}");
        let vals: Vec<f64> = res
            .trace
            .iter()
            .rev()
            .take(6)
            .rev()
            .map(|v| (v * 1e8).round() / 1e8)
            .collect();
        println!("trace tail: {vals:?}");
        // Inner solve behavior at the final iterate.
        let surrogate = dc.linearize(&res.theta.theta);
        let solved = oplgen::dcopt::solve_box(
            |t| surrogate.eval(t),
            &res.theta.theta,
            spec.box_bound,
            5000,
            mcfg.inner_grad_tol,
        );
        println!(
            "inner at final: iters={} conv={} value={:.8}",
            solved.iters, solved.converged, solved.value
        );
    }

    for gamma in [1.0, 2.0, 4.0, 8.0, 12.0] {
        let set = bounds(gamma, cal.p_sel).unwrap();
        let dc = DcObjective::new(&scores, set, spec, &sim.train);
        let res = mmccp(&dc, &mcfg, 1).unwrap();
        let theta = res.theta.theta.clone();
        let regret = policy_regret(|x| policy_prob(&spec, &theta, x), &sim.target);
        let treated = sim
            .target
            .iter()
            .filter(|s| policy_prob(&spec, &theta, &s.x) > 0.5)
            .count() as f64
            / sim.target.len() as f64;
        println!(
            "gamma={gamma:5.1} l={:.3} u={:6.3} wcv={:8.4} regret={:.4} treated={treated:.3} outer={} conv={} theta={:?}",
            set.l,
            set.u,
            res.final_value(),
            regret,
            res.outer_iters,
            res.converged,
            theta.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
}
