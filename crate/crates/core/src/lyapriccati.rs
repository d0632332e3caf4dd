//! Dense solvers for the small matrix equations behind discrete-time LQR:
//! the stabilizing solution of the algebraic Riccati equation, discrete
//! Lyapunov (Stein) equations in both orientations, and spectral radii.
//!
//! Conventions used throughout:
//!   dynamics        x+ = A x + B u,   feedback u = -K x,   A_cl = A - B K
//!   Riccati map     R(P) = -P + Q + A'PA - A'PB (R + B'PB)^{-1} B'PA
//!   transpose-side  X - A_cl' X A_cl = C   (cost-to-go / observability side)
//!   adjoint side    Y - A_cl Y A_cl'  = C   (covariance / reachability side)
//!
//! Problem sizes here are tiny (state dimension <= 10 or so), so the Lyapunov
//! solves vectorize the equation and hand an n^2 x n^2 system to a dense LU.
//! That is O(n^6) but with the constant of an LAPACK-style kernel; no
//! Schur-form Bartels-Stewart machinery is warranted at these sizes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute tolerance on the Riccati residual Frobenius norm.
pub const DARE_TOL_ABS: f64 = 1e-12;
/// Relative tolerance, scaled by ||P||_F.
pub const DARE_TOL_REL: f64 = 1e-10;
/// Newton iteration cap; Newton doubles correct digits per step once in the
/// basin, so hitting this means something is wrong with the problem.
pub const DARE_MAX_NEWTON: usize = 100;
/// A closed loop with spectral radius above 1 - this margin is treated as
/// unstable; downstream sensitivity formulas all assume a strict contraction.
pub const STABILITY_MARGIN: f64 = 1e-8;

const SCHUR_EPS: f64 = 1e-14;
const SCHUR_MAX_ITER: usize = 10_000;

/// Options for [`solve_dare_with`]. `Default` matches the module constants.
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_newton: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        DareOptions {
            tol_abs: DARE_TOL_ABS,
            tol_rel: DARE_TOL_REL,
            max_newton: DARE_MAX_NEWTON,
        }
    }
}

/// Stabilizing solution of the discrete-time algebraic Riccati equation
/// together with the quantities every caller needs next.
#[derive(Debug, Clone)]
pub struct DareSolution {
    /// Symmetric PSD cost-to-go matrix P.
    pub p: DMatrix<f64>,
    /// Optimal gain K = (R + B'PB)^{-1} B'PA.
    pub k: DMatrix<f64>,
    /// Closed loop A - BK; Schur stable by construction.
    pub a_cl: DMatrix<f64>,
    /// Input-side curvature M = R + B'PB (symmetric PD).
    pub m: DMatrix<f64>,
    /// Frobenius norm of the Riccati residual at P.
    pub residual_norm: f64,
    /// Spectral radius of A_cl.
    pub rho_cl: f64,
}

fn require_square(m: &DMatrix<f64>, name: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{name} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Empty(format!("{name} has dimension zero")));
    }
    Ok(m.nrows())
}

fn require_finite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{name} contains NaN or infinity")))
    }
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Spectral radius via the real Schur form.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    require_square(m, "matrix")?;
    require_finite(m, "matrix")?;
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or(Error::EigenFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Shared kernel: solves X - G' X G = C by LU on the n^2 x n^2 vectorized
/// operator I - G' (x) G' (column-major vec, so vec(G'XG) = (G' (x) G') vec X).
fn dlyap_vectorized(g: &DMatrix<f64>, c: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let gt = g.transpose();
    let mut op = DMatrix::<f64>::identity(n * n, n * n);
    op -= gt.kronecker(&gt);
    let rhs = DVector::from_column_slice(c.as_slice());
    let lu = nalgebra::linalg::LU::new(op);
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::SingularOperator(format!("{what}: I - G (x) G is singular")))?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("{what}: solution is not finite")));
    }
    Ok(DMatrix::from_column_slice(n, n, x.as_slice()))
}

fn dlyap_checked(
    g: &DMatrix<f64>,
    c: &DMatrix<f64>,
    residual: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    what: &str,
) -> Result<DMatrix<f64>> {
    let x = dlyap_vectorized(g, c, what)?;
    // C symmetric implies X symmetric in exact arithmetic; enforce it.
    let x = if c == &c.transpose() { symmetrize(&x) } else { x };
    let res = residual(&x);
    let scale = 1.0 + c.norm() + x.norm();
    if res.norm() > 1e-8 * scale {
        return Err(Error::NumericalFailure(format!(
            "{what}: residual {:.3e} exceeds tolerance at scale {:.3e}",
            res.norm(),
            scale
        )));
    }
    Ok(x)
}

/// Solve X - A_cl' X A_cl = C (transpose/observability orientation).
pub fn solve_dlyap_t(a_cl: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = require_square(a_cl, "A_cl")?;
    if require_square(c, "C")? != n {
        return Err(Error::DimensionMismatch(format!(
            "C is {}x{} but A_cl is {n}x{n}",
            c.nrows(),
            c.ncols()
        )));
    }
    require_finite(a_cl, "A_cl")?;
    require_finite(c, "C")?;
    dlyap_checked(
        a_cl,
        c,
        |x| x - a_cl.transpose() * x * a_cl - c,
        "dlyap_t",
    )
}

/// Solve Y - A_cl Y A_cl' = C (adjoint/reachability orientation).
pub fn solve_dlyap_adj(a_cl: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = require_square(a_cl, "A_cl")?;
    if require_square(c, "C")? != n {
        return Err(Error::DimensionMismatch(format!(
            "C is {}x{} but A_cl is {n}x{n}",
            c.nrows(),
            c.ncols()
        )));
    }
    require_finite(a_cl, "A_cl")?;
    require_finite(c, "C")?;
    // Same kernel with G = A_cl': X - (A_cl')' X (A_cl') = X - A_cl X A_cl'.
    let gt = a_cl.transpose();
    dlyap_checked(&gt, c, |x| x - a_cl * x * a_cl.transpose() - c, "dlyap_adj")
}

/// Riccati residual R(P); zero at the exact solution.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let btpb = r + b.transpose() * p * b;
    let chol = nalgebra::linalg::Cholesky::new(btpb).ok_or_else(|| {
        Error::NumericalFailure("R + B'PB is not positive definite".to_string())
    })?;
    let btpa = b.transpose() * p * a;
    let gain_term = a.transpose() * p * b * chol.solve(&btpa);
    Ok(q + a.transpose() * p * a - gain_term - p)
}

fn gain_for(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = symmetrize(&(r + b.transpose() * p * b));
    let chol = nalgebra::linalg::Cholesky::new(m.clone()).ok_or_else(|| {
        Error::NumericalFailure("R + B'PB lost positive definiteness".to_string())
    })?;
    let k = chol.solve(&(b.transpose() * p * a));
    Ok((k, m))
}

/// Fixed-point Riccati iteration P <- Q + A'PA - A'PB (R+B'PB)^{-1} B'PA.
/// Converges linearly at rate rho(A_cl)^2 whenever a stabilizing solution
/// exists; used to seed or replace Newton when Newton cannot get started.
fn dare_fixed_point(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: &DareOptions,
) -> Result<DMatrix<f64>> {
    let mut p = q.clone();
    let max_iter = 50_000usize;
    let mut res_norm = f64::INFINITY;
    for _ in 0..max_iter {
        let res = dare_residual(a, b, q, r, &p)?;
        res_norm = res.norm();
        if res_norm <= opts.tol_abs + opts.tol_rel * p.norm() {
            return Ok(p);
        }
        p = symmetrize(&(&p + res));
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(
                "Riccati iteration diverged to non-finite values".to_string(),
            ));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res_norm,
    })
}

/// A gain K such that rho(A - BK) < 1, found by value iteration from P = Q.
/// Open-loop stable systems short-circuit to K = 0.
fn stabilizing_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let n_u = b.ncols();
    if spectral_radius(a)? < 1.0 - STABILITY_MARGIN {
        return Ok(DMatrix::zeros(n_u, n));
    }
    let mut p = q.clone();
    for _ in 0..2_000 {
        let (k, _) = gain_for(a, b, r, &p)?;
        let a_cl = a - b * &k;
        if spectral_radius(&a_cl)? < 1.0 - STABILITY_MARGIN {
            return Ok(k);
        }
        p = symmetrize(&(q + a.transpose() * &p * a - a.transpose() * &p * b * &k));
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::NonStabilizable(
        "value iteration found no stabilizing gain".to_string(),
    ))
}

/// Stabilizing DARE solution with default tolerances.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DareSolution> {
    solve_dare_with(a, b, q, r, &DareOptions::default())
}

/// Newton-Kleinman iteration: at each step the policy-evaluation Lyapunov
/// equation P - A_k' P A_k = Q + K'RK is solved for the current gain, then
/// the gain is refreshed. From a stabilizing start every iterate is
/// stabilizing and convergence is quadratic. A fixed-point sweep serves as
/// fallback if Newton stalls.
pub fn solve_dare_with(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: &DareOptions,
) -> Result<DareSolution> {
    let n = require_square(a, "A")?;
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows but A is {n}x{n}",
            b.nrows()
        )));
    }
    if b.ncols() == 0 {
        return Err(Error::Empty("B has zero columns".to_string()));
    }
    let n_u = b.ncols();
    if require_square(q, "Q")? != n {
        return Err(Error::DimensionMismatch("Q must match A".to_string()));
    }
    if require_square(r, "R")? != n_u {
        return Err(Error::DimensionMismatch(
            "R must match the input dimension".to_string(),
        ));
    }
    for (m, name) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        require_finite(m, name)?;
    }
    if (q - q.transpose()).amax() > 1e-10 * (1.0 + q.amax()) {
        return Err(Error::BadInput("Q must be symmetric".to_string()));
    }
    if (r - r.transpose()).amax() > 1e-10 * (1.0 + r.amax()) {
        return Err(Error::BadInput("R must be symmetric".to_string()));
    }
    if nalgebra::linalg::Cholesky::new(r.clone()).is_none() {
        return Err(Error::BadInput(
            "R must be positive definite".to_string(),
        ));
    }
    let q_eigs = nalgebra::linalg::SymmetricEigen::new(symmetrize(q)).eigenvalues;
    if q_eigs.iter().any(|&l| l < -1e-10 * (1.0 + q.amax())) {
        return Err(Error::BadInput(
            "Q must be positive semidefinite".to_string(),
        ));
    }

    let p = match newton_kleinman(a, b, q, r, opts) {
        Ok(p) => p,
        // Newton can only fail here for genuinely hard problems; give the
        // globally convergent (when a solution exists) fixed point a chance.
        Err(Error::NonStabilizable(msg)) => {
            dare_fixed_point(a, b, q, r, opts).map_err(|_| Error::NonStabilizable(msg))?
        }
        Err(_) => dare_fixed_point(a, b, q, r, opts)?,
    };

    finalize(a, b, q, r, p, opts)
}

fn newton_kleinman(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: &DareOptions,
) -> Result<DMatrix<f64>> {
    let mut k = stabilizing_gain(a, b, q, r)?;
    let mut last_res = f64::INFINITY;
    let mut p = DMatrix::zeros(a.nrows(), a.nrows());
    for iter in 0..opts.max_newton {
        let a_k = a - b * &k;
        let cost = symmetrize(&(q + k.transpose() * r * &k));
        p = solve_dlyap_t(&a_k, &cost)?;
        p = symmetrize(&p);
        let res = dare_residual(a, b, q, r, &p)?.norm();
        if res <= opts.tol_abs + opts.tol_rel * p.norm() {
            return Ok(p);
        }
        // Monotone decrease is guaranteed; a large sustained increase means
        // the iteration left its basin (e.g. borderline stabilizability).
        if iter > 3 && res > 10.0 * last_res {
            return Err(Error::NoConvergence {
                iterations: iter,
                residual: res,
            });
        }
        last_res = res;
        let (k_next, _) = gain_for(a, b, r, &p)?;
        k = k_next;
    }
    let res = dare_residual(a, b, q, r, &p)?.norm();
    if res <= opts.tol_abs + opts.tol_rel * p.norm() {
        Ok(p)
    } else {
        Err(Error::NoConvergence {
            iterations: opts.max_newton,
            residual: res,
        })
    }
}

fn finalize(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: DMatrix<f64>,
    opts: &DareOptions,
) -> Result<DareSolution> {
    let p = symmetrize(&p);
    let (k, m) = gain_for(a, b, r, &p)?;
    let a_cl = a - b * &k;
    let rho_cl = spectral_radius(&a_cl)?;
    if rho_cl >= 1.0 - STABILITY_MARGIN {
        return Err(Error::Unstable { rho: rho_cl });
    }
    let residual_norm = dare_residual(a, b, q, r, &p)?.norm();
    if residual_norm > opts.tol_abs + opts.tol_rel * p.norm() {
        return Err(Error::NoConvergence {
            iterations: opts.max_newton,
            residual: residual_norm,
        });
    }
    Ok(DareSolution {
        p,
        k,
        a_cl,
        m,
        residual_norm,
        rho_cl,
    })
}
