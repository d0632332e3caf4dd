//! End-to-end influence scoring: one fit, one curvature factorization, one
//! DARE solve, one adjoint solve, then N cheap per-trajectory scores.
//!
//! The sequence is: ridge fit (factorizing the Hessian block once), held-out
//! prediction gradient, LQR design and adjoint state, cost gradient, the two
//! back-solves H^{-1} grad L_pred and H^{-1} grad J, and finally one pass
//! over trajectories computing g_k and all scores as dot products. Exact
//! deletion effects and diagnostics ride along in the same pass.
//!
//! A model whose closed loop cannot be stabilized is a legitimate outcome:
//! the control-side scores are omitted (with the failure recorded) while the
//! identification-side scores are still produced.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::daresens::{
    design_lqr_with, grad_j_adjoint, grad_j_forward, CostGradient, GradMethod, LqrDesign,
};
use crate::error::{Error, Result};
use crate::ident::{
    cg_inverse_hvp, dataset_gram, exact_loto, fit_ridge, half_quadratic, pred_loss, pred_loss_grad,
    sq_loss, traj_gradient, Dataset, RidgeFit,
};
use crate::lyapriccati::DareOptions;

/// How inverse-Hessian-vector products are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HvpSolve {
    /// Blockwise Cholesky back-solve (default).
    Direct,
    /// Matrix-free conjugate gradients.
    Cg { tol: f64, max_iter: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub hvp: HvpSolve,
    pub grad: GradMethod,
    pub dare: DareOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            hvp: HvpSolve::Direct,
            grad: GradMethod::Adjoint,
            dare: DareOptions::default(),
        }
    }
}

/// All scores for one training trajectory. Control-side entries are absent
/// when the fitted model failed the stabilizability assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryScores {
    pub traj_id: usize,
    /// First-order influence on held-out prediction loss.
    pub if1: f64,
    /// First-order influence on the nominal LQR cost.
    pub if2: Option<f64>,
    /// Exact deletion effect on prediction loss (closed form).
    pub exact_pred_delta: f64,
    /// Baseline: gradient alignment without the curvature correction.
    pub grad_only_pred: f64,
    pub grad_only_j: Option<f64>,
    /// Baseline: the trajectory's own training loss at the fit.
    pub residual_norm: f64,
    /// Curvature share of this trajectory; certifies first-order accuracy.
    pub delta_k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub n_x: usize,
    pub n_u: usize,
    pub p: usize,
    pub n_traj: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub pred_loss: f64,
    /// Closed-loop spectral radius, when the design succeeded.
    pub rho_cl: Option<f64>,
    /// Nominal cost J = Tr(P0 Sigma0), when the design succeeded.
    pub j: Option<f64>,
}

/// Wall-clock seconds per method, each including the shared per-trajectory
/// gradient pass it would need if run alone. Kept separate from the
/// deterministic payload so serialized reports stay bit-reproducible.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodTimings {
    pub fit_s: f64,
    pub if1_s: f64,
    pub if2_s: Option<f64>,
    pub exact_loto_s: f64,
    pub baseline_s: f64,
    pub total_s: f64,
}

/// Instrumented operation counts backing the cost-structure claims: a
/// report costs one curvature factorization, one adjoint Lyapunov solve,
/// and p trace assemblies (plus p forward solves only if the forward
/// gradient was requested).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostCounters {
    pub hessian_factorizations: u32,
    pub adjoint_lyap_solves: u32,
    pub forward_lyap_solves: u32,
    pub trace_assemblies: u32,
}

#[derive(Debug, Clone)]
pub struct InfluenceReport {
    pub version: u32,
    pub summary: ModelSummary,
    pub records: Vec<TrajectoryScores>,
    pub counters: CostCounters,
    pub warnings: Vec<String>,
    /// Why control-side scores are missing, when they are.
    pub control_failure: Option<String>,
    pub timings: MethodTimings,
}

pub const REPORT_VERSION: u32 = 1;

fn solve_hvp(fit: &RidgeFit, v: &nalgebra::DVector<f64>, opts: &SolverOptions) -> Result<nalgebra::DVector<f64>> {
    match opts.hvp {
        HvpSolve::Direct => fit.solve_h(v),
        HvpSolve::Cg { tol, max_iter } => cg_inverse_hvp(fit, v, tol, max_iter),
    }
}

/// Run the full scoring pass over a train/test split.
pub fn run_algorithm1(
    train: &Dataset,
    test: &Dataset,
    lambda: f64,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<InfluenceReport> {
    let t_total = Instant::now();
    if train.n_x() != test.n_x() || train.n_u() != test.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "train is ({}, {}) but test is ({}, {})",
            train.n_x(),
            train.n_u(),
            test.n_x(),
            test.n_u()
        ))
        .at_stage("inputs"));
    }

    let t = Instant::now();
    let fit = fit_ridge(train, lambda).map_err(|e| e.at_stage("fit"))?;
    let fit_s = t.elapsed().as_secs_f64();

    // Identification-side direction: grad of held-out loss, then H^{-1} of it.
    let t = Instant::now();
    let grad_pred =
        pred_loss_grad(fit.theta_hat(), test).map_err(|e| e.at_stage("prediction-gradient"))?;
    let base_pred = pred_loss(fit.theta_hat(), test).map_err(|e| e.at_stage("prediction-loss"))?;
    let grad_pred_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let w_pred = solve_hvp(&fit, &grad_pred, opts).map_err(|e| e.at_stage("if1-backsolve"))?;
    let if1_solve_s = t.elapsed().as_secs_f64();

    // Control side; a stabilizability failure downgrades the report rather
    // than aborting it.
    let t = Instant::now();
    let mut control_failure = None;
    let design: Option<LqrDesign> =
        match design_lqr_with(fit.theta_hat(), q, r, sigma0, &opts.dare) {
            Ok(d) => Some(d),
            Err(e @ (Error::AssumptionViolated(_) | Error::NonStabilizable(_))) => {
                control_failure = Some(e.to_string());
                None
            }
            Err(e) => return Err(e.at_stage("lqr-design")),
        };
    let grad_j: Option<CostGradient> = match &design {
        Some(d) => Some(
            match opts.grad {
                GradMethod::Adjoint => grad_j_adjoint(d),
                GradMethod::Forward => grad_j_forward(d),
            }
            .map_err(|e| e.at_stage("cost-gradient"))?,
        ),
        None => None,
    };
    let v_j = match &grad_j {
        Some(g) => Some(solve_hvp(&fit, &g.grad, opts).map_err(|e| e.at_stage("if2-backsolve"))?),
        None => None,
    };
    let if2_setup_s = t.elapsed().as_secs_f64();

    // Per-trajectory pass: trajectory gradients first (shared by every
    // method), then scores as dot products.
    let t = Instant::now();
    let grads: Vec<_> = train
        .trajectories()
        .iter()
        .map(|traj| traj_gradient(&fit, traj))
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("trajectory-gradients"))?;
    let gk_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let z_test = dataset_gram(test);
    let mut exact_deltas = Vec::with_capacity(train.len());
    let mut delta_ks = Vec::with_capacity(train.len());
    for traj in train.trajectories() {
        let shift = exact_loto(&fit, traj).map_err(|e| e.at_stage("exact-loto"))?;
        let delta = shift
            .exact_shift
            .as_ref()
            .expect("exact_loto fills the exact shift");
        exact_deltas.push(grad_pred.dot(delta) + half_quadratic(delta, &z_test, fit.n_x()));
        delta_ks.push(shift.delta_k);
    }
    let exact_sweep_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut records = Vec::with_capacity(train.len());
    let mut warnings = Vec::new();
    for (k, traj) in train.trajectories().iter().enumerate() {
        let g_k = &grads[k];
        let if1 = g_k.dot(&w_pred);
        let if2 = v_j.as_ref().map(|v| g_k.dot(v));
        let grad_only_pred = g_k.dot(&grad_pred);
        let grad_only_j = grad_j.as_ref().map(|g| g_k.dot(&g.grad));
        let residual_norm = sq_loss(fit.theta_hat(), traj);
        let delta_k = delta_ks[k];
        if delta_k >= 1.0 {
            warnings.push(format!(
                "trajectory {}: curvature share delta_k = {delta_k:.6} >= 1; first-order scores are uncertified",
                traj.id()
            ));
        }
        let finite = if1.is_finite()
            && if2.is_none_or(f64::is_finite)
            && exact_deltas[k].is_finite()
            && grad_only_pred.is_finite()
            && residual_norm.is_finite()
            && delta_k.is_finite();
        if !finite {
            return Err(Error::NonFinite(format!(
                "scores for trajectory {}",
                traj.id()
            ))
            .at_stage("scores"));
        }
        records.push(TrajectoryScores {
            traj_id: traj.id(),
            if1,
            if2,
            exact_pred_delta: exact_deltas[k],
            grad_only_pred,
            grad_only_j,
            residual_norm,
            delta_k,
        });
    }
    let dots_s = t.elapsed().as_secs_f64();

    let counters = CostCounters {
        hessian_factorizations: fit.factorizations(),
        adjoint_lyap_solves: design.as_ref().map_or(0, |d| d.adjoint_solves),
        forward_lyap_solves: grad_j.as_ref().map_or(0, |g| g.forward_solves),
        trace_assemblies: grad_j.as_ref().map_or(0, |g| g.trace_assemblies),
    };

    let summary = ModelSummary {
        n_x: train.n_x(),
        n_u: train.n_u(),
        p: train.p(),
        n_traj: train.len(),
        n_test: test.len(),
        lambda,
        pred_loss: base_pred,
        rho_cl: design.as_ref().map(|d| d.dare.rho_cl),
        j: design.as_ref().map(|d| d.cost()),
    };

    // Each method's cost as if run alone: shared passes are charged to every
    // method that needs them.
    let timings = MethodTimings {
        fit_s,
        if1_s: grad_pred_s + if1_solve_s + gk_s + dots_s,
        if2_s: design.as_ref().map(|_| if2_setup_s + gk_s + dots_s),
        exact_loto_s: grad_pred_s + exact_sweep_s,
        baseline_s: gk_s + dots_s,
        total_s: t_total.elapsed().as_secs_f64(),
    };

    Ok(InfluenceReport {
        version: REPORT_VERSION,
        summary,
        records,
        counters,
        warnings,
        control_failure,
        timings,
    })
}
