use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ident::data::{Dataset, ParamVector, Trajectory};
use crate::ident::fit::{traj_gradient, RidgeFit};
use crate::ident::loto::exact_loto;

/// Accumulate the gradient of sum_s ||x_s+ - Phi_s theta||^2 over one
/// trajectory into `out`: -2 sum_s Phi_s' (x_s+ - Phi_s theta), exploiting
/// the Kronecker regressor structure (block i receives -2 r_i z).
pub(crate) fn sq_loss_grad_into(theta: &ParamVector, traj: &Trajectory, out: &mut DVector<f64>) {
    let q = theta.q();
    for t in traj.transitions() {
        let r = theta.residual(t);
        let z = t.z();
        for i in 0..theta.n_x() {
            out.rows_mut(i * q, q).axpy(-2.0 * r[i], &z, 1.0);
        }
    }
}

pub(crate) fn sq_loss(theta: &ParamVector, traj: &Trajectory) -> f64 {
    traj.transitions()
        .iter()
        .map(|t| theta.residual(t).norm_squared())
        .sum()
}

fn check_dims(theta: &ParamVector, data: &Dataset) -> Result<()> {
    if theta.n_x() != data.n_x() || theta.n_u() != data.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "model is ({}, {}) but dataset is ({}, {})",
            theta.n_x(),
            theta.n_u(),
            data.n_x(),
            data.n_u()
        )));
    }
    Ok(())
}

/// Held-out prediction loss: sum over all test transitions of
/// ||x+ - A x - B u||^2.
pub fn pred_loss(theta: &ParamVector, test: &Dataset) -> Result<f64> {
    check_dims(theta, test)?;
    Ok(test.trajectories().iter().map(|t| sq_loss(theta, t)).sum())
}

/// Gradient of the held-out prediction loss at `theta`.
pub fn pred_loss_grad(theta: &ParamVector, test: &Dataset) -> Result<DVector<f64>> {
    check_dims(theta, test)?;
    let mut g = DVector::zeros(theta.p());
    for traj in test.trajectories() {
        sq_loss_grad_into(theta, traj, &mut g);
    }
    Ok(g)
}

/// Gram matrix of the test inputs, sum over test transitions of z z'.
/// Half the test-loss Hessian's diagonal block.
pub(crate) fn dataset_gram(data: &Dataset) -> DMatrix<f64> {
    let q = data.q();
    let mut z = DMatrix::zeros(q, q);
    for traj in data.trajectories() {
        z += traj.gram();
    }
    z
}

/// Quadratic form sum_i d_i' Z d_i over the row blocks of `delta`; equals
/// half of delta' H_pred delta for the blockwise test Hessian I (x) 2 Z.
pub(crate) fn half_quadratic(delta: &DVector<f64>, z_test: &DMatrix<f64>, n_x: usize) -> f64 {
    let q = z_test.nrows();
    let mut acc = 0.0;
    for i in 0..n_x {
        let d = delta.rows(i * q, q);
        acc += d.dot(&(z_test * d));
    }
    acc
}

/// Change in held-out prediction loss caused by deleting trajectory k,
/// evaluated exactly through the quadratic expansion
/// grad' delta + 1/2 delta' H_pred delta at the exact deletion shift.
/// Exact because the prediction loss is itself quadratic in theta.
pub fn exact_pred_delta(fit: &RidgeFit, traj: &Trajectory, test: &Dataset) -> Result<f64> {
    let shift = exact_loto(fit, traj)?;
    let delta = shift
        .exact_shift
        .expect("exact_loto always fills the exact shift");
    let grad = pred_loss_grad(fit.theta_hat(), test)?;
    let z_test = dataset_gram(test);
    Ok(grad.dot(&delta) + half_quadratic(&delta, &z_test, fit.n_x()))
}

/// First-order influence of trajectory k on held-out prediction loss:
/// g_k' H^{-1} grad L_pred. Positive scores predict the loss rises if the
/// trajectory is deleted.
pub fn if1_score(fit: &RidgeFit, traj: &Trajectory, test: &Dataset) -> Result<f64> {
    let grad = pred_loss_grad(fit.theta_hat(), test)?;
    let w = fit.solve_h(&grad)?;
    let g_k = traj_gradient(fit, traj)?;
    Ok(g_k.dot(&w))
}

/// Reference scores that skip the curvature correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineScores {
    /// g_k' direction, the influence numerator without H^{-1}.
    pub grad_only: f64,
    /// Trajectory k's own training loss at the fit.
    pub residual_norm: f64,
}

pub fn baseline_scores(
    fit: &RidgeFit,
    traj: &Trajectory,
    direction: &DVector<f64>,
) -> Result<BaselineScores> {
    if direction.len() != fit.p() {
        return Err(Error::DimensionMismatch(format!(
            "direction has length {}, expected {}",
            direction.len(),
            fit.p()
        )));
    }
    let g_k = traj_gradient(fit, traj)?;
    Ok(BaselineScores {
        grad_only: g_k.dot(direction),
        residual_norm: sq_loss(fit.theta_hat(), traj),
    })
}
