//! Ground-truth deletion effects by literal retraining, plus plant-level
//! closed-loop cost evaluation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use trajinf::daresens::design_lqr;
use trajinf::ident::{fit_ridge, pred_loss};
use trajinf::{Error, Result};

use crate::experiment::{ExperimentConfig, GeneratedData, PlantCostOptions};
use crate::simulate::{stream_rng, DIVERGENCE_NORM, STREAM_PLANT};
use crate::systems::SystemModel;

/// Cost recorded for a rollout that leaves the divergence envelope.
pub const DIVERGED_COST: f64 = 1e12;

/// True deletion effects for one training trajectory. Control-side entries
/// are missing when the leave-one-out design failed stabilizability.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRecord {
    pub traj_id: usize,
    pub delta_pred: Option<f64>,
    pub delta_j: Option<f64>,
    pub delta_plant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub records: Vec<TruthRecord>,
    /// Wall-clock of the full per-trajectory retraining sweep.
    pub retrain_wall_s: f64,
    pub base_pred: f64,
    pub base_j: Option<f64>,
    pub base_plant: Option<f64>,
    /// Leave-one-out designs that failed stabilizability.
    pub control_failures: usize,
    /// Plant rollouts that hit the divergence sentinel.
    pub diverged_rollouts: usize,
}

/// Monte-Carlo closed-loop cost of u = -K x on the true plant, averaged
/// over initial states x0 ~ N(0, Sigma0). Rollouts are deterministic given
/// x0 (no process noise), so with a shared seed two gains are compared
/// under common random numbers. Diverging rollouts contribute the sentinel
/// cost and are counted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantCost {
    pub mean_cost: f64,
    pub diverged_rollouts: usize,
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("Sigma0 must be square".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::linalg::SymmetricEigen::new(sym);
    let scale = m.norm();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -1e-10 * (1.0 + scale) {
            return Err(Error::BadInput("Sigma0 is not positive semidefinite".into()));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

pub fn plant_cost(
    model: &SystemModel,
    mismatch: f64,
    k_gain: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    sigma0: &DMatrix<f64>,
    opts: &PlantCostOptions,
    seed: u64,
) -> Result<PlantCost> {
    let (n_x, n_u) = (model.n_x(), model.n_u());
    if k_gain.nrows() != n_u || k_gain.ncols() != n_x {
        return Err(Error::DimensionMismatch(format!(
            "gain is {}x{}, plant wants {}x{}",
            k_gain.nrows(),
            k_gain.ncols(),
            n_u,
            n_x
        )));
    }
    if q.nrows() != n_x || !q.is_square() || r.nrows() != n_u || !r.is_square() {
        return Err(Error::DimensionMismatch("Q/R sized against the plant".into()));
    }
    let root = psd_sqrt(sigma0)?;
    let mut total = 0.0;
    let mut diverged = 0usize;
    for rollout in 0..opts.n_rollouts {
        let mut rng = stream_rng(seed, STREAM_PLANT, rollout as u64);
        let draw = DVector::from_fn(n_x, |_, _| rng.sample(StandardNormal));
        let mut x = &root * draw;
        let mut cost = 0.0;
        let mut ok = true;
        for _ in 0..opts.horizon {
            let u = -(k_gain * &x);
            cost += (q * &x).dot(&x) + (r * &u).dot(&u);
            x = model.step(&x, &u, mismatch)?;
            let norm = x.norm();
            if !norm.is_finite() || norm > DIVERGENCE_NORM {
                ok = false;
                break;
            }
        }
        if ok {
            total += cost;
        } else {
            total += DIVERGED_COST;
            diverged += 1;
        }
    }
    Ok(PlantCost {
        mean_cost: total / opts.n_rollouts as f64,
        diverged_rollouts: diverged,
    })
}

fn is_control_failure(err: &Error) -> bool {
    matches!(
        err.root(),
        Error::AssumptionViolated(_)
            | Error::NonStabilizable(_)
            | Error::NoConvergence { .. }
            | Error::Unstable { .. }
    )
}

/// The literal leave-one-trajectory-out sweep: for every k, refit on the
/// reduced dataset, recompute the held-out prediction loss, redesign the
/// controller for the nominal cost, and (optionally) re-evaluate the
/// closed-loop cost on the true plant under common random numbers.
pub fn loto_ground_truth(data: &GeneratedData, cfg: &ExperimentConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let train = &data.train;
    let test = &data.test;
    let fit = fit_ridge(train, cfg.lambda)?;
    let base_pred = pred_loss(fit.theta_hat(), test)?;
    let (n_x, n_u) = (train.n_x(), train.n_u());
    let q = cfg.q_matrix(n_x);
    let r = cfg.r_matrix(n_u);
    let sigma0 = cfg.sigma0_matrix(n_x);

    let base_design = match design_lqr(fit.theta_hat(), &q, &r, &sigma0) {
        Ok(d) => Some(d),
        Err(e) if is_control_failure(&e) => None,
        Err(e) => return Err(e),
    };
    let base_j = base_design.as_ref().map(|d| d.cost());
    let base_plant = match (&base_design, cfg.plant_truth) {
        (Some(d), true) => Some(plant_cost(
            &data.system,
            cfg.mismatch_strength,
            d.k0(),
            &q,
            &r,
            &sigma0,
            &cfg.plant,
            data.seed,
        )?),
        _ => None,
    };

    let started = Instant::now();
    let per_k: Vec<Result<(TruthRecord, usize, usize)>> = (0..train.len())
        .into_par_iter()
        .map(|k| {
            let reduced = train.leave_one_out(k)?;
            let refit = fit_ridge(&reduced, cfg.lambda)?;
            let delta_pred = Some(pred_loss(refit.theta_hat(), test)? - base_pred);
            let mut failures = 0usize;
            let mut diverged = 0usize;
            let (delta_j, delta_plant) = if let Some(base_j) = base_j {
                match design_lqr(refit.theta_hat(), &q, &r, &sigma0) {
                    Ok(d) => {
                        let dj = Some(d.cost() - base_j);
                        let dp = match &base_plant {
                            Some(base) => {
                                let pc = plant_cost(
                                    &data.system,
                                    cfg.mismatch_strength,
                                    d.k0(),
                                    &q,
                                    &r,
                                    &sigma0,
                                    &cfg.plant,
                                    data.seed,
                                )?;
                                diverged = pc.diverged_rollouts;
                                Some(pc.mean_cost - base.mean_cost)
                            }
                            None => None,
                        };
                        (dj, dp)
                    }
                    Err(e) if is_control_failure(&e) => {
                        failures = 1;
                        (None, None)
                    }
                    Err(e) => return Err(e),
                }
            } else {
                (None, None)
            };
            Ok((
                TruthRecord {
                    traj_id: train.trajectories()[k].id(),
                    delta_pred,
                    delta_j,
                    delta_plant,
                },
                failures,
                diverged,
            ))
        })
        .collect();
    let retrain_wall_s = started.elapsed().as_secs_f64();

    let mut records = Vec::with_capacity(train.len());
    let mut control_failures = 0;
    let mut diverged_rollouts = base_plant.as_ref().map_or(0, |p| p.diverged_rollouts);
    for item in per_k {
        let (rec, fails, div) = item?;
        control_failures += fails;
        diverged_rollouts += div;
        records.push(rec);
    }
    Ok(GroundTruth {
        records,
        retrain_wall_s,
        base_pred,
        base_j,
        base_plant: base_plant.map(|p| p.mean_cost),
        control_failures,
        diverged_rollouts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::make_dataset;
    use crate::systems::{Family, LinearSystem};
    use trajinf::ident::Dataset;
    use trajinf::lyapriccati::solve_dlyap_t;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::defaults(Family::S1);
        cfg.n_traj = 8;
        cfg.t_len = 12;
        cfg
    }

    #[test]
    fn plant_cost_matches_lyapunov_oracle_for_linear_closed_loop() {
        // Deterministic rollout cost is x0' X x0 with
        // X = solve_dlyap_t(A - BK, Q + K'RK); the Monte-Carlo average over
        // x0 ~ N(0, I) converges to Tr(X).
        let cfg = ExperimentConfig::defaults(Family::S2);
        let data = make_dataset(&cfg, 4).unwrap();
        let sys = match &data.system {
            SystemModel::Linear(s) => s.clone(),
            _ => unreachable!(),
        };
        let fit = fit_ridge(&data.train, cfg.lambda).unwrap();
        let q = cfg.q_matrix(4);
        let r = cfg.r_matrix(2);
        let sigma0 = cfg.sigma0_matrix(4);
        let design = design_lqr(fit.theta_hat(), &q, &r, &sigma0).unwrap();
        let k = design.k0();
        // Closed loop on the TRUE plant, not the fitted model.
        let a_cl = &sys.a - &sys.b * k;
        let cost_shape = &q + k.transpose() * &r * k;
        let x = solve_dlyap_t(&a_cl, &cost_shape).unwrap();
        let analytic = x.trace();
        let opts = PlantCostOptions {
            horizon: 400,
            n_rollouts: 32768,
        };
        let mc = plant_cost(&data.system, 0.0, k, &q, &r, &sigma0, &opts, 99).unwrap();
        assert_eq!(mc.diverged_rollouts, 0);
        let rel = (mc.mean_cost - analytic).abs() / analytic;
        assert!(rel < 0.02, "Monte-Carlo {} vs analytic {analytic}", mc.mean_cost);
    }

    #[test]
    fn zero_weights_give_zero_cost() {
        let cfg = ExperimentConfig::defaults(Family::S1);
        let data = make_dataset(&cfg, 0).unwrap();
        let zq = DMatrix::zeros(2, 2);
        let zr = DMatrix::zeros(1, 1);
        let sigma0 = DMatrix::identity(2, 2);
        let k = DMatrix::zeros(1, 2);
        let pc = plant_cost(
            &data.system,
            0.0,
            &k,
            &zq,
            &zr,
            &sigma0,
            &PlantCostOptions::default(),
            0,
        )
        .unwrap();
        assert_eq!(pc.mean_cost, 0.0);
    }

    #[test]
    fn open_loop_cost_matches_lyapunov_solve() {
        let cfg = ExperimentConfig::defaults(Family::S1);
        let data = make_dataset(&cfg, 2).unwrap();
        let sys = match &data.system {
            SystemModel::Linear(s) => s.clone(),
            _ => unreachable!(),
        };
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let sigma0 = DMatrix::identity(2, 2);
        let x = solve_dlyap_t(&sys.a, &q).unwrap();
        let opts = PlantCostOptions {
            horizon: 2000,
            n_rollouts: 32768,
        };
        let mc = plant_cost(
            &data.system,
            0.0,
            &DMatrix::zeros(1, 2),
            &q,
            &r,
            &sigma0,
            &opts,
            5,
        )
        .unwrap();
        let rel = (mc.mean_cost - x.trace()).abs() / x.trace();
        assert!(rel < 0.02, "open-loop {} vs {}", mc.mean_cost, x.trace());
    }

    #[test]
    fn common_random_numbers_share_initial_states() {
        // Same seed, two different gains: rollout r must start from the
        // same x0, so identical gains give bit-identical costs.
        let cfg = ExperimentConfig::defaults(Family::S1);
        let data = make_dataset(&cfg, 1).unwrap();
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let sigma0 = DMatrix::identity(2, 2);
        let k = DMatrix::from_row_slice(1, 2, &[0.1, 0.2]);
        let a = plant_cost(&data.system, 0.0, &k, &q, &r, &sigma0, &PlantCostOptions::default(), 7)
            .unwrap();
        let b = plant_cost(&data.system, 0.0, &k, &q, &r, &sigma0, &PlantCostOptions::default(), 7)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn diverging_gain_hits_sentinel() {
        let a = DMatrix::from_row_slice(1, 1, &[0.5]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let model = SystemModel::Linear(LinearSystem::new(a, b, 0.0, "t").unwrap());
        // u = -Kx with K = -10 makes the loop x+ = 10.5 x.
        let k = DMatrix::from_row_slice(1, 1, &[-10.0]);
        let q = DMatrix::identity(1, 1);
        let r = DMatrix::identity(1, 1);
        let sigma0 = DMatrix::identity(1, 1);
        let pc = plant_cost(&model, 0.0, &k, &q, &r, &sigma0, &PlantCostOptions::default(), 1)
            .unwrap();
        assert_eq!(pc.diverged_rollouts, PlantCostOptions::default().n_rollouts);
        assert_eq!(pc.mean_cost, DIVERGED_COST);
    }

    #[test]
    fn truth_matches_exact_closed_forms_on_linear_family() {
        use trajinf::ident::exact_loto;
        let cfg = small_cfg();
        let data = make_dataset(&cfg, 11).unwrap();
        let truth = loto_ground_truth(&data, &cfg).unwrap();
        assert_eq!(truth.records.len(), 8);
        assert_eq!(truth.control_failures, 0);
        let fit = fit_ridge(&data.train, cfg.lambda).unwrap();
        let q = cfg.q_matrix(2);
        let r = cfg.r_matrix(1);
        let sigma0 = cfg.sigma0_matrix(2);
        for (k, rec) in truth.records.iter().enumerate() {
            // Prediction delta against the closed-form deletion effect.
            let exact =
                trajinf::ident::exact_pred_delta(&fit, &data.train.trajectories()[k], &data.test)
                    .unwrap();
            let got = rec.delta_pred.unwrap();
            assert!(
                (got - exact).abs() <= 1e-9 * (1.0 + exact.abs()),
                "k={k}: {got} vs {exact}"
            );
            // Nominal delta against a re-solved design at the shifted fit.
            let shift = exact_loto(&fit, &data.train.trajectories()[k]).unwrap();
            let shifted = trajinf::ident::ParamVector::from_theta(
                fit.theta_hat().theta() + shift.exact_shift.as_ref().unwrap(),
                2,
                1,
            )
            .unwrap();
            let j_shift = design_lqr(&shifted, &q, &r, &sigma0).unwrap().cost();
            let want = j_shift - truth.base_j.unwrap();
            let got_j = rec.delta_j.unwrap();
            assert!(
                (got_j - want).abs() <= 1e-9 * (1.0 + want.abs()),
                "k={k}: {got_j} vs {want}"
            );
        }
    }

    #[test]
    fn removing_one_duplicate_changes_nothing() {
        use trajinf::ident::{Dataset, Trajectory};
        // Ten copies of one trajectory: deleting any single copy leaves the
        // minimizer essentially in place, so every delta is ~0. The ridge
        // term does not scale with the copy count, so it shifts the refit
        // slightly; keep it tiny here so that effect stays below threshold.
        let mut cfg = small_cfg();
        cfg.lambda = 1e-9;
        let data = make_dataset(&cfg, 3).unwrap();
        let proto = data.train.trajectories()[0].transitions().to_vec();
        let copies: Vec<Trajectory> = (0..10)
            .map(|id| Trajectory::new(id, proto.clone()).unwrap())
            .collect();
        let train = Dataset::new(2, 1, copies).unwrap();
        let dup = GeneratedData {
            system: data.system.clone(),
            train,
            test: data.test.clone(),
            seed: 3,
        };
        let truth = loto_ground_truth(&dup, &cfg).unwrap();
        for rec in &truth.records {
            assert!(rec.delta_pred.unwrap().abs() < 1e-7);
            assert!(rec.delta_j.unwrap().abs() < 1e-6);
        }
    }

    #[test]
    fn unstabilizable_refits_are_flagged_not_fatal() {
        use trajinf::ident::{Trajectory, Transition};
        // A plant whose unstable mode the input cannot reach. Regressors sit
        // on the coordinate axes so ridge shrinkage cannot introduce
        // couplings: the fit and every refit are exactly unstabilizable.
        let a = DMatrix::from_row_slice(2, 2, &[1.3, 0.0, 0.0, 0.4]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let model = SystemModel::Linear(LinearSystem {
            a: a.clone(),
            b: b.clone(),
            sigma_w: 0.0,
            name: "unstab".into(),
        });
        let make = |id: usize| {
            let scale = 1.0 + id as f64 * 0.25;
            let transitions = (0..9)
                .map(|s| {
                    let c = scale * (1.0 + s as f64 * 0.1);
                    let mut x = DVector::zeros(2);
                    let mut u = DVector::zeros(1);
                    match s % 3 {
                        0 => x[0] = c,
                        1 => x[1] = c,
                        _ => u[0] = c,
                    }
                    let xp = &a * &x + &b * &u;
                    Transition::new(x, u, xp)
                })
                .collect();
            Trajectory::new(id, transitions).unwrap()
        };
        let train = Dataset::new(2, 1, (0..6).map(make).collect()).unwrap();
        let test = Dataset::single_allowed(2, 1, vec![make(10), make(11)]).unwrap();
        let mut cfg = ExperimentConfig::defaults(Family::S1);
        cfg.n_traj = 6;
        cfg.t_len = 9;
        let data = GeneratedData {
            system: model,
            train,
            test,
            seed: 2,
        };
        let truth = loto_ground_truth(&data, &cfg).unwrap();
        assert!(truth.base_j.is_none());
        for rec in &truth.records {
            assert!(rec.delta_pred.is_some());
            assert!(rec.delta_j.is_none());
            assert!(rec.delta_plant.is_none());
        }
    }
}
