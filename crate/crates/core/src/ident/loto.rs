use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ident::data::Trajectory;
use crate::ident::fit::{traj_gradient, RidgeFit};

/// Effect of deleting one trajectory on the fitted parameters.
///
/// `exact_shift` is theta_hat(without k) - theta_hat, available in closed
/// form because the objective is quadratic: (H - H_k)^{-1} g_k. The
/// first-order shift H^{-1} g_k is what influence scores use; `delta_k`
/// measures trajectory k's share of the total curvature and controls the
/// approximation error:
///
///   ||exact - first_order|| <= delta/(1-delta) * ||first_order||
///
/// with a quadratically small remainder once the second Neumann term
/// H^{-1} H_k H^{-1} g_k is accounted for. delta_k < 1 always holds here
/// since the ridge term keeps H - H_k positive definite.
#[derive(Debug, Clone)]
pub struct LotoShift {
    pub traj_id: usize,
    pub exact_shift: Option<DVector<f64>>,
    pub first_order_shift: DVector<f64>,
    pub delta_k: f64,
    pub bound_relative_error: f64,
}

/// Largest eigenvalue of L^{-1} (2 Z_k) L^{-T} where L L' = H's shared block.
/// This equals ||H^{-1/2} H_k H^{-1/2}||_2 because both Hessians are
/// I (x) block and whitening acts blockwise.
fn curvature_share(fit: &RidgeFit, gram: &DMatrix<f64>) -> Result<f64> {
    let l = fit.block_cholesky().l();
    let hk = gram * 2.0;
    let y = l
        .solve_lower_triangular(&hk)
        .ok_or_else(|| Error::SingularOperator("Cholesky factor is singular".to_string()))?;
    // S = L^{-1} H_k L^{-T} = (L^{-1} (L^{-1} H_k)')'
    let s = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularOperator("Cholesky factor is singular".to_string()))?
        .transpose();
    let s_sym = (&s + s.transpose()) * 0.5;
    let eigs = nalgebra::linalg::SymmetricEigen::new(s_sym).eigenvalues;
    Ok(eigs.iter().cloned().fold(0.0, f64::max))
}

fn shift_parts(
    fit: &RidgeFit,
    traj: &Trajectory,
    want_exact: bool,
) -> Result<(Option<DVector<f64>>, DVector<f64>, f64)> {
    let gram = traj.gram();
    let g_k = traj_gradient(fit, traj)?;
    let first_order = fit.solve_h(&g_k)?;
    let delta = curvature_share(fit, &gram)?;

    let exact = if want_exact {
        // Reduced-curvature block 2 (Z - Z_k) + 2 lambda I, PD for lambda > 0.
        let reduced = fit.hessian_block() - gram * 2.0;
        let chol = nalgebra::linalg::Cholesky::new(reduced).ok_or_else(|| {
            Error::NumericalFailure(
                "curvature lost positive definiteness after deletion".to_string(),
            )
        })?;
        let q = fit.q();
        let mut shift = DVector::zeros(fit.p());
        for i in 0..fit.n_x() {
            let gi = g_k.rows(i * q, q).into_owned();
            shift.rows_mut(i * q, q).copy_from(&chol.solve(&gi));
        }
        Some(shift)
    } else {
        None
    };
    Ok((exact, first_order, delta))
}

/// Closed-form deletion effect (H - H_k)^{-1} g_k plus diagnostics.
pub fn exact_loto(fit: &RidgeFit, traj: &Trajectory) -> Result<LotoShift> {
    let (exact, first_order, delta_k) = shift_parts(fit, traj, true)?;
    Ok(LotoShift {
        traj_id: traj.id(),
        exact_shift: exact,
        first_order_shift: first_order,
        delta_k,
        bound_relative_error: delta_k / (1.0 - delta_k),
    })
}

/// First-order shift H^{-1} g_k and its error certificate, skipping the
/// reduced-curvature factorization.
pub fn first_order_loto(fit: &RidgeFit, traj: &Trajectory) -> Result<LotoShift> {
    let (_, first_order, delta_k) = shift_parts(fit, traj, false)?;
    Ok(LotoShift {
        traj_id: traj.id(),
        exact_shift: None,
        first_order_shift: first_order,
        delta_k,
        bound_relative_error: delta_k / (1.0 - delta_k),
    })
}
