//! Identification layer: trajectory data, the ridge least-squares fit, exact
//! and first-order leave-one-trajectory-out, and scores that target held-out
//! prediction loss.

mod data;
mod fit;
mod loto;
mod scores;

pub use data::{regressor, Dataset, ParamVector, Trajectory, Transition};
pub use fit::{cg_inverse_hvp, fit_ridge, traj_gradient, traj_hessian, RidgeFit};
pub use loto::{exact_loto, first_order_loto, LotoShift};
pub use scores::{
    baseline_scores, exact_pred_delta, if1_score, pred_loss, pred_loss_grad, BaselineScores,
};

pub(crate) use scores::{dataset_gram, half_quadratic, sq_loss, sq_loss_grad_into};
