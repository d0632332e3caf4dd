use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::ident::data::{Dataset, ParamVector, Trajectory};

/// Ridge least-squares fit of x+ = A x + B u over all transitions, with the
/// objective L(theta) = sum_s ||x_s+ - Phi_s theta||^2 + lambda ||theta||^2.
///
/// The curvature H = 2 sum_s Phi_s' Phi_s + 2 lambda I is block diagonal:
/// n_x identical q x q blocks 2 Z + 2 lambda I with Z = sum_s z_s z_s'. The
/// fit stores one Cholesky factor of that block and reuses it for every
/// H^{-1} v product, so the whole-parameter Hessian never materializes on
/// hot paths.
pub struct RidgeFit {
    theta_hat: ParamVector,
    lambda: f64,
    block: DMatrix<f64>,
    block_chol: Cholesky<f64, Dyn>,
    traj_grams: Vec<DMatrix<f64>>,
    traj_ids: Vec<usize>,
    factorizations: u32,
}

impl RidgeFit {
    pub fn theta_hat(&self) -> &ParamVector {
        &self.theta_hat
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_x(&self) -> usize {
        self.theta_hat.n_x()
    }

    pub fn n_u(&self) -> usize {
        self.theta_hat.n_u()
    }

    pub fn q(&self) -> usize {
        self.theta_hat.q()
    }

    pub fn p(&self) -> usize {
        self.theta_hat.p()
    }

    pub fn n_traj(&self) -> usize {
        self.traj_ids.len()
    }

    /// Shared q x q diagonal block of the Hessian, 2 Z + 2 lambda I.
    pub fn hessian_block(&self) -> &DMatrix<f64> {
        &self.block
    }

    /// Dense p x p Hessian I (x) (2 Z + 2 lambda I); intended for tests and
    /// small problems.
    pub fn hessian(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n_x(), self.n_x()).kronecker(&self.block)
    }

    pub(crate) fn block_cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.block_chol
    }

    /// H^{-1} v through the cached block factorization.
    pub fn solve_h(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.p()
            )));
        }
        let q = self.q();
        let mut out = DVector::zeros(self.p());
        for i in 0..self.n_x() {
            let vi = v.rows(i * q, q).into_owned();
            out.rows_mut(i * q, q).copy_from(&self.block_chol.solve(&vi));
        }
        Ok(out)
    }

    /// H v without factorization (used by the conjugate-gradient path).
    pub fn apply_h(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "vector has length {}, expected {}",
                v.len(),
                self.p()
            )));
        }
        let q = self.q();
        let mut out = DVector::zeros(self.p());
        for i in 0..self.n_x() {
            let vi = v.rows(i * q, q);
            out.rows_mut(i * q, q).gemv(1.0, &self.block, &vi, 0.0);
        }
        Ok(out)
    }

    /// Gram matrices Z_k cached per training trajectory, in dataset order.
    pub fn traj_gram(&self, idx: usize) -> Result<&DMatrix<f64>> {
        self.traj_grams
            .get(idx)
            .ok_or_else(|| Error::BadInput(format!("trajectory index {idx} out of range")))
    }

    pub fn traj_ids(&self) -> &[usize] {
        &self.traj_ids
    }

    /// Number of Hessian factorizations performed while building this fit.
    /// Exactly one Cholesky of the shared block; reported for cost audits.
    pub fn factorizations(&self) -> u32 {
        self.factorizations
    }
}

/// Fit the ridge model. Fails if lambda is not strictly positive (the
/// leave-one-out algebra divides by the regularized curvature) or the
/// stationarity check does not hold at the solution.
pub fn fit_ridge(data: &Dataset, lambda: f64) -> Result<RidgeFit> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::BadInput(format!(
            "lambda must be finite and positive, got {lambda}"
        )));
    }
    let n_x = data.n_x();
    let q = data.q();

    let mut z_total = DMatrix::<f64>::zeros(q, q);
    let mut w = DMatrix::<f64>::zeros(q, n_x); // sum_s z_s x_s+'
    let mut traj_grams = Vec::with_capacity(data.len());
    let mut traj_ids = Vec::with_capacity(data.len());
    for traj in data.trajectories() {
        let gram = traj.gram();
        z_total += &gram;
        traj_grams.push(gram);
        traj_ids.push(traj.id());
        for t in traj.transitions() {
            w.ger(1.0, &t.z(), &t.x_plus, 1.0);
        }
    }

    let mut block = z_total * 2.0;
    for i in 0..q {
        block[(i, i)] += 2.0 * lambda;
    }
    let block_chol = Cholesky::new(block.clone()).ok_or_else(|| {
        Error::NumericalFailure(
            "regularized normal matrix is not positive definite".to_string(),
        )
    })?;

    let mut theta = DVector::zeros(n_x * q);
    for i in 0..n_x {
        let rhs = w.column(i) * 2.0;
        let beta = block_chol.solve(&rhs);
        theta.rows_mut(i * q, q).copy_from(&beta);
    }
    let theta_hat = ParamVector::from_theta(theta, n_x, data.n_u())?;

    // Stationarity of the regularized objective at theta_hat.
    let mut grad_sq = 0.0;
    for i in 0..n_x {
        let beta = DVector::from_column_slice(theta_hat.row(i));
        let g = &block * beta - w.column(i) * 2.0;
        grad_sq += g.norm_squared();
    }
    let h_norm = (n_x as f64).sqrt() * block.norm();
    let tol = 1e-9 * (1.0 + h_norm * theta_hat.theta().norm());
    if grad_sq.sqrt() > tol {
        return Err(Error::NumericalFailure(format!(
            "fit is not stationary: gradient norm {:.3e} exceeds {:.3e}",
            grad_sq.sqrt(),
            tol
        )));
    }

    Ok(RidgeFit {
        theta_hat,
        lambda,
        block,
        block_chol,
        traj_grams,
        traj_ids,
        factorizations: 1,
    })
}

/// Gradient of trajectory k's unregularized loss at the fitted parameters:
/// g_k = -2 sum_{s in k} Phi_s' (x_s+ - Phi_s theta_hat).
pub fn traj_gradient(fit: &RidgeFit, traj: &Trajectory) -> Result<DVector<f64>> {
    grad_at(fit.theta_hat(), traj)
}

pub(crate) fn grad_at(theta: &ParamVector, traj: &Trajectory) -> Result<DVector<f64>> {
    let first = &traj.transitions()[0];
    if first.x.len() != theta.n_x() || first.u.len() != theta.n_u() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory {} does not match model dimensions",
            traj.id()
        )));
    }
    let mut g = DVector::zeros(theta.p());
    crate::ident::sq_loss_grad_into(theta, traj, &mut g);
    Ok(g)
}

/// Hessian contribution of one trajectory, I (x) 2 Z_k, materialized dense.
pub fn traj_hessian(n_x: usize, n_u: usize, traj: &Trajectory) -> Result<DMatrix<f64>> {
    let first = &traj.transitions()[0];
    if first.x.len() != n_x || first.u.len() != n_u {
        return Err(Error::DimensionMismatch(format!(
            "trajectory {} does not match dimensions ({n_x}, {n_u})",
            traj.id()
        )));
    }
    let gram = traj.gram() * 2.0;
    Ok(DMatrix::identity(n_x, n_x).kronecker(&gram))
}

/// Conjugate gradients for H x = v using only Hessian-vector products.
/// Matrix-free alternative to the factorized solve; tolerance is relative
/// to ||v||.
pub fn cg_inverse_hvp(
    fit: &RidgeFit,
    v: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::BadInput(format!("tolerance must be positive, got {tol}")));
    }
    let v_norm = v.norm();
    let mut x = DVector::zeros(v.len());
    if v_norm == 0.0 {
        return Ok(x);
    }
    let mut r = v.clone();
    let mut p = r.clone();
    let mut rs_old = r.norm_squared();
    for _ in 0..max_iter {
        let hp = fit.apply_h(&p)?;
        let alpha = rs_old / p.dot(&hp);
        if !alpha.is_finite() {
            return Err(Error::NumericalFailure(
                "conjugate gradients hit a non-finite step".to_string(),
            ));
        }
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &hp, 1.0);
        let rs_new = r.norm_squared();
        if rs_new.sqrt() <= tol * v_norm {
            return Ok(x);
        }
        p = &r + &p * (rs_new / rs_old);
        rs_old = rs_new;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: rs_old.sqrt() / v_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::data::{regressor, Transition};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    pub(crate) fn random_dataset(
        rng: &mut ChaCha8Rng,
        n_traj: usize,
        len: usize,
        n_x: usize,
        n_u: usize,
    ) -> Dataset {
        let trajs = (0..n_traj)
            .map(|id| {
                let transitions = (0..len)
                    .map(|_| {
                        Transition::new(
                            randn_vec(rng, n_x),
                            randn_vec(rng, n_u),
                            randn_vec(rng, n_x),
                        )
                    })
                    .collect();
                Trajectory::new(id, transitions).unwrap()
            })
            .collect();
        Dataset::new(n_x, n_u, trajs).unwrap()
    }

    /// Dense-oracle fit: build H and the right-hand side from materialized
    /// per-step regressors and solve the p x p system with LU. Exercises none
    /// of the block shortcuts used by fit_ridge.
    fn dense_oracle_fit(data: &Dataset, lambda: f64) -> DVector<f64> {
        let p = data.p();
        let mut h = DMatrix::<f64>::identity(p, p) * (2.0 * lambda);
        let mut rhs = DVector::<f64>::zeros(p);
        for traj in data.trajectories() {
            for t in traj.transitions() {
                let phi = regressor(&t.x, &t.u);
                h += phi.transpose() * &phi * 2.0;
                rhs += phi.transpose() * &t.x_plus * 2.0;
            }
        }
        nalgebra::linalg::LU::new(h).solve(&rhs).unwrap()
    }

    #[test]
    fn fit_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n_x, n_u) in &[(2usize, 1usize), (3, 2), (4, 4)] {
            let data = random_dataset(&mut rng, 4, 6, n_x, n_u);
            let fit = fit_ridge(&data, 1e-4).unwrap();
            let oracle = dense_oracle_fit(&data, 1e-4);
            assert!((fit.theta_hat().theta() - &oracle).norm() <= 1e-10 * (1.0 + oracle.norm()));
        }
    }

    #[test]
    fn fit_recovers_noiseless_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal) * 0.4);
        let b = DMatrix::from_fn(3, 2, |_, _| rng.sample(StandardNormal));
        let truth = ParamVector::from_ab(&a, &b).unwrap();
        let trajs: Vec<Trajectory> = (0..5)
            .map(|id| {
                let mut x = randn_vec(&mut rng, 3);
                let transitions = (0..10)
                    .map(|_| {
                        let u = randn_vec(&mut rng, 2);
                        let xp = &a * &x + &b * &u;
                        let tr = Transition::new(x.clone(), u, xp.clone());
                        x = xp;
                        tr
                    })
                    .collect();
                Trajectory::new(id, transitions).unwrap()
            })
            .collect();
        let data = Dataset::new(3, 2, trajs).unwrap();
        let fit = fit_ridge(&data, 1e-10).unwrap();
        assert!((fit.theta_hat().theta() - truth.theta()).norm() < 1e-6);
    }

    #[test]
    fn traj_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = random_dataset(&mut rng, 3, 5, 2, 2);
        let fit = fit_ridge(&data, 1e-3).unwrap();
        let traj = &data.trajectories()[1];
        let g = traj_gradient(&fit, traj).unwrap();

        let loss = |theta: &ParamVector| -> f64 {
            traj.transitions()
                .iter()
                .map(|t| theta.residual(t).norm_squared())
                .sum()
        };
        let eps = 1e-6;
        for m in 0..fit.p() {
            let mut tp = fit.theta_hat().theta().clone();
            tp[m] += eps;
            let mut tm = fit.theta_hat().theta().clone();
            tm[m] -= eps;
            let fp = loss(&ParamVector::from_theta(tp, 2, 2).unwrap());
            let fm = loss(&ParamVector::from_theta(tm, 2, 2).unwrap());
            let fd = (fp - fm) / (2.0 * eps);
            assert!(
                (fd - g[m]).abs() <= 1e-5 * (1.0 + fd.abs()),
                "coordinate {m}: fd {fd} vs analytic {}",
                g[m]
            );
        }
    }

    #[test]
    fn traj_hessian_matches_regressor_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let data = random_dataset(&mut rng, 2, 4, 2, 1);
        let traj = &data.trajectories()[0];
        let h = traj_hessian(2, 1, traj).unwrap();
        let p = data.p();
        let mut oracle = DMatrix::<f64>::zeros(p, p);
        for t in traj.transitions() {
            let phi = regressor(&t.x, &t.u);
            oracle += phi.transpose() * &phi * 2.0;
        }
        assert!((h - oracle).norm() < 1e-12);
    }

    #[test]
    fn hessian_is_sum_of_trajectory_hessians_plus_ridge() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let lambda = 2.5e-4;
        let data = random_dataset(&mut rng, 4, 3, 2, 2);
        let fit = fit_ridge(&data, lambda).unwrap();
        let p = data.p();
        let mut sum = DMatrix::<f64>::identity(p, p) * (2.0 * lambda);
        for traj in data.trajectories() {
            sum += traj_hessian(2, 2, traj).unwrap();
        }
        assert!((fit.hessian() - &sum).norm() <= 1e-10 * (1.0 + sum.norm()));
    }

    #[test]
    fn solve_h_matches_dense_lu() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let data = random_dataset(&mut rng, 3, 6, 3, 1);
        let fit = fit_ridge(&data, 1e-5).unwrap();
        let v = randn_vec(&mut rng, fit.p());
        let fast = fit.solve_h(&v).unwrap();
        let dense = nalgebra::linalg::LU::new(fit.hessian()).solve(&v).unwrap();
        assert!((&fast - &dense).norm() <= 1e-9 * (1.0 + dense.norm()));
        let back = fit.apply_h(&fast).unwrap();
        assert!((back - &v).norm() <= 1e-9 * (1.0 + v.norm()));
    }

    #[test]
    fn cg_agrees_with_factorized_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let data = random_dataset(&mut rng, 3, 8, 3, 2);
        let fit = fit_ridge(&data, 1e-4).unwrap();
        let v = randn_vec(&mut rng, fit.p());
        let direct = fit.solve_h(&v).unwrap();
        let cg = cg_inverse_hvp(&fit, &v, 1e-12, 500).unwrap();
        assert!((&cg - &direct).norm() <= 1e-8 * (1.0 + direct.norm()));
        assert!(cg_inverse_hvp(&fit, &v, 1e-14, 1).is_err());
        let zero = DVector::zeros(fit.p());
        assert_eq!(cg_inverse_hvp(&fit, &zero, 1e-12, 10).unwrap(), zero);
    }

    #[test]
    fn fit_rejects_nonpositive_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let data = random_dataset(&mut rng, 2, 3, 2, 1);
        assert!(matches!(fit_ridge(&data, 0.0), Err(Error::BadInput(_))));
        assert!(matches!(fit_ridge(&data, -1.0), Err(Error::BadInput(_))));
        assert!(matches!(fit_ridge(&data, f64::NAN), Err(Error::BadInput(_))));
    }

    #[test]
    fn fit_counts_one_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let data = random_dataset(&mut rng, 2, 3, 2, 1);
        let fit = fit_ridge(&data, 1e-5).unwrap();
        assert_eq!(fit.factorizations(), 1);
    }
}
