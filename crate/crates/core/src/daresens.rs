//! Derivatives of the LQR design metric J(theta) = Tr(P(theta) Sigma0)
//! through the Riccati equation, by implicit differentiation.
//!
//! With R(P, theta) = P - Q - A'PA + A'PB (R + B'PB)^{-1} B'PA and P(theta)
//! its stabilizing root, differentiating R(P(theta), theta) = 0 along
//! coordinate m gives
//!
//!   T(S_m) = -dR/dtheta_m,     T(X) = X - A_cl' X A_cl,
//!
//! so each sensitivity S_m = dP/dtheta_m costs one Lyapunov solve (the
//! forward method). The partial derivative of the residual at fixed P has
//! the compact form
//!
//!   dR/dtheta_m = -Acl_m' P0 A_cl - A_cl' P0 Acl_m,
//!   Acl_m = dA_cl/dtheta_m = A_m - B_m K0,
//!
//! where A_m, B_m are single-entry basis matrices; the terms through the
//! gain K0 drop out by optimality of K0 at fixed P0 (envelope argument).
//! Pairing with the adjoint variable Lambda solving
//! Lambda - A_cl Lambda A_cl' = Sigma0 collapses the whole gradient to one
//! Lyapunov solve plus p cheap trace entries:
//!
//!   dJ/dtheta_m = Tr(S_m Sigma0) = -Tr(Lambda dR/dtheta_m)
//!               = 2 <Acl_m, P0 A_cl Lambda>.
//!
//! Because each Acl_m has a single nonzero entry (A coordinates) or a single
//! nonzero row times K0 (B coordinates), the p traces are entry lookups into
//! G = P0 A_cl Lambda and G K0', never materializing any basis matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ident::{ParamVector, RidgeFit, Trajectory};
use crate::lyapriccati::{
    solve_dare_with, solve_dlyap_adj, solve_dlyap_t, DareOptions, DareSolution, STABILITY_MARGIN,
};

/// A fitted model paired with its LQR synthesis and the adjoint state.
#[derive(Debug, Clone)]
pub struct LqrDesign {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
    pub dare: DareSolution,
    /// Closed-loop reachability Gramian: Lambda - A_cl Lambda A_cl' = Sigma0.
    pub lambda: DMatrix<f64>,
    pub n_x: usize,
    pub n_u: usize,
    /// Adjoint Lyapunov solves performed building this design (always 1).
    pub adjoint_solves: u32,
}

impl LqrDesign {
    /// Nominal cost J = Tr(P0 Sigma0).
    pub fn cost(&self) -> f64 {
        (&self.dare.p * &self.sigma0).trace()
    }

    pub fn p0(&self) -> &DMatrix<f64> {
        &self.dare.p
    }

    pub fn k0(&self) -> &DMatrix<f64> {
        &self.dare.k
    }

    pub fn a_cl(&self) -> &DMatrix<f64> {
        &self.dare.a_cl
    }

    /// Parameter dimension p = n_x (n_x + n_u).
    pub fn p_dim(&self) -> usize {
        self.n_x * (self.n_x + self.n_u)
    }

    fn coord(&self, m: usize) -> Result<(usize, usize, bool)> {
        let q_dim = self.n_x + self.n_u;
        if m >= self.p_dim() {
            return Err(Error::BadInput(format!(
                "coordinate {m} out of range (p = {})",
                self.p_dim()
            )));
        }
        let i = m / q_dim;
        let c = m % q_dim;
        if c < self.n_x {
            Ok((i, c, false))
        } else {
            Ok((i, c - self.n_x, true))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMethod {
    Forward,
    Adjoint,
}

/// Gradient of J with respect to theta, with the cost-audit counters of the
/// method that produced it.
#[derive(Debug, Clone)]
pub struct CostGradient {
    pub grad: DVector<f64>,
    pub method: GradMethod,
    /// Forward (transpose-orientation) Lyapunov solves performed.
    pub forward_solves: u32,
    /// Per-coordinate trace assemblies performed.
    pub trace_assemblies: u32,
}

fn check_sym_psd(m: &DMatrix<f64>, n: usize, name: &str, strict: bool) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be {n}x{n}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{name} contains NaN or infinity")));
    }
    if (m - m.transpose()).amax() > 1e-10 * (1.0 + m.amax()) {
        return Err(Error::BadInput(format!("{name} must be symmetric")));
    }
    if strict {
        if nalgebra::linalg::Cholesky::new(m.clone()).is_none() {
            return Err(Error::BadInput(format!("{name} must be positive definite")));
        }
    } else {
        let eigs = nalgebra::linalg::SymmetricEigen::new((m + m.transpose()) * 0.5).eigenvalues;
        if eigs.iter().any(|&l| l < -1e-10 * (1.0 + m.amax())) {
            return Err(Error::BadInput(format!(
                "{name} must be positive semidefinite"
            )));
        }
    }
    Ok(())
}

/// Synthesize the LQR controller for the model in `theta` and solve the
/// adjoint equation. Fails with `AssumptionViolated` when the closed loop
/// cannot be made a strict contraction, which is a first-class outcome for
/// identified models rather than a bug.
pub fn design_lqr(
    theta: &ParamVector,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
) -> Result<LqrDesign> {
    design_lqr_with(theta, q, r, sigma0, &DareOptions::default())
}

pub fn design_lqr_with(
    theta: &ParamVector,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
    opts: &DareOptions,
) -> Result<LqrDesign> {
    let n_x = theta.n_x();
    let n_u = theta.n_u();
    check_sym_psd(q, n_x, "Q", false)?;
    check_sym_psd(r, n_u, "R", true)?;
    check_sym_psd(sigma0, n_x, "Sigma0", false)?;

    let a = theta.a_matrix();
    let b = theta.b_matrix();
    let dare = match solve_dare_with(&a, &b, q, r, opts) {
        Ok(sol) => sol,
        Err(Error::Unstable { rho }) => {
            return Err(Error::AssumptionViolated(format!(
                "closed loop is not a strict contraction (spectral radius {rho:.6})"
            )))
        }
        Err(e) => return Err(e),
    };
    if dare.rho_cl >= 1.0 - STABILITY_MARGIN {
        return Err(Error::AssumptionViolated(format!(
            "closed loop is not a strict contraction (spectral radius {:.6})",
            dare.rho_cl
        )));
    }
    let lambda = solve_dlyap_adj(&dare.a_cl, sigma0)?;
    Ok(LqrDesign {
        q: q.clone(),
        r: r.clone(),
        sigma0: sigma0.clone(),
        dare,
        lambda,
        n_x,
        n_u,
        adjoint_solves: 1,
    })
}

/// The Lyapunov operator T(dP) = dP - A_cl' dP A_cl, the derivative of the
/// Riccati residual with respect to P.
pub fn frechet_t(a_cl: &DMatrix<f64>, dp: &DMatrix<f64>) -> DMatrix<f64> {
    dp - a_cl.transpose() * dp * a_cl
}

/// Compact residual derivative -Acl_m' P0 A_cl - A_cl' P0 Acl_m assembled
/// from its rank-two structure: an A coordinate (i, j) contributes
/// -(e_j w_i' + w_i e_j') and a B coordinate (i, l) contributes
/// +(kappa w_i' + w_i kappa') with w = P0 A_cl, w_i its i-th row as a
/// column, kappa = K0' e_l. Symmetric by construction.
pub fn dresidual_dtheta(design: &LqrDesign, m: usize) -> Result<DMatrix<f64>> {
    let (i, c, is_b) = design.coord(m)?;
    let n = design.n_x;
    let w = design.p0() * design.a_cl();
    let w_i = w.row(i).transpose();
    let mut out = DMatrix::zeros(n, n);
    if !is_b {
        // -(e_c w_i' + w_i e_c')
        for t in 0..n {
            out[(c, t)] -= w_i[t];
            out[(t, c)] -= w_i[t];
        }
    } else {
        let kappa = design.k0().row(c).transpose();
        out.ger(1.0, &kappa, &w_i, 1.0);
        out.ger(1.0, &w_i, &kappa, 1.0);
    }
    Ok(out)
}

/// Expanded form of the residual derivative in open-loop quantities,
/// materializing the basis matrices. Slower by a factor of p; retained as
/// the oracle for the indexed fast path.
pub fn dresidual_dtheta_expanded(design: &LqrDesign, m: usize) -> Result<DMatrix<f64>> {
    let (i, c, is_b) = design.coord(m)?;
    let n_x = design.n_x;
    let n_u = design.n_u;
    let mut basis_a = DMatrix::zeros(n_x, n_x);
    let mut basis_b = DMatrix::zeros(n_x, n_u);
    if is_b {
        basis_b[(i, c)] = 1.0;
    } else {
        basis_a[(i, c)] = 1.0;
    }
    let p0 = design.p0();
    let k0 = design.k0();
    let a_cl = design.a_cl();
    // -(A_m - B_m K0)' P0 A_cl - A_cl' P0 (A_m - B_m K0), written out.
    let term = basis_a.transpose() * p0 * a_cl - k0.transpose() * basis_b.transpose() * p0 * a_cl;
    Ok(-(&term + term.transpose()))
}

/// Sensitivity S_m = dP/dtheta_m through one forward Lyapunov solve.
pub fn forward_sensitivity(design: &LqrDesign, m: usize) -> Result<DMatrix<f64>> {
    let rhs = -dresidual_dtheta(design, m)?;
    solve_dlyap_t(design.a_cl(), &rhs)
}

/// Gradient of J by p forward Lyapunov solves; the reference method.
pub fn grad_j_forward(design: &LqrDesign) -> Result<CostGradient> {
    let p = design.p_dim();
    let mut grad = DVector::zeros(p);
    for m in 0..p {
        let s_m = forward_sensitivity(design, m)?;
        grad[m] = (&s_m * &design.sigma0).trace();
    }
    Ok(CostGradient {
        grad,
        method: GradMethod::Forward,
        forward_solves: p as u32,
        trace_assemblies: p as u32,
    })
}

/// Gradient of J from the adjoint state: dJ/dtheta_m = 2 <Acl_m, G> with
/// G = P0 A_cl Lambda. A coordinates read 2 G[i, j]; B coordinates read
/// -2 (G K0')[i, l]. No Lyapunov solves beyond the one cached in the design.
pub fn grad_j_adjoint(design: &LqrDesign) -> Result<CostGradient> {
    let n_x = design.n_x;
    let n_u = design.n_u;
    let q_dim = n_x + n_u;
    let g_mat = design.p0() * design.a_cl() * &design.lambda;
    let g_b = &g_mat * design.k0().transpose();
    let mut grad = DVector::zeros(design.p_dim());
    let mut assemblies = 0u32;
    for i in 0..n_x {
        for j in 0..n_x {
            grad[i * q_dim + j] = 2.0 * g_mat[(i, j)];
            assemblies += 1;
        }
        for l in 0..n_u {
            grad[i * q_dim + n_x + l] = -2.0 * g_b[(i, l)];
            assemblies += 1;
        }
    }
    Ok(CostGradient {
        grad,
        method: GradMethod::Adjoint,
        forward_solves: 0,
        trace_assemblies: assemblies,
    })
}

/// Adjoint gradient assembled the slow way, -Tr(Lambda dR_m) with dense
/// residual derivatives; oracle for `grad_j_adjoint`.
pub fn grad_j_adjoint_naive(design: &LqrDesign) -> Result<CostGradient> {
    let p = design.p_dim();
    let mut grad = DVector::zeros(p);
    for m in 0..p {
        let dr = dresidual_dtheta(design, m)?;
        grad[m] = -(&design.lambda * dr).trace();
    }
    Ok(CostGradient {
        grad,
        method: GradMethod::Adjoint,
        forward_solves: 0,
        trace_assemblies: p as u32,
    })
}

/// Control-level influence of trajectory k: g_k' H^{-1} grad J. Positive
/// scores predict the nominal LQR cost rises if the trajectory is removed.
pub fn if2_score(fit: &RidgeFit, traj: &Trajectory, grad_j: &CostGradient) -> Result<f64> {
    let v = fit.solve_h(&grad_j.grad)?;
    let g_k = crate::ident::traj_gradient(fit, traj)?;
    Ok(g_k.dot(&v))
}
