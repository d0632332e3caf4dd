//! Benchmark system generators.
//!
//! Four families: a canonical mass-spring-damper (S1), seed-parameterized
//! dense stable systems at two scales (S2, S3), and a two-link manipulator
//! (S4) whose rollouts are nonlinear while the fitted model stays linear.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trajinf::lyapriccati::spectral_radius;
use trajinf::{Error, Result};

use crate::simulate::{stream_rng, STREAM_SYSTEM};

/// Default spectral radius the generated A matrices are rescaled to.
pub const DEFAULT_RHO_TARGET: f64 = 0.9;

/// Hard cap on the rescaling target; generated systems stay safely inside
/// the unit circle.
pub const MAX_RHO_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    S1,
    S2,
    S3,
    S4,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::S1 => "S1",
            Family::S2 => "S2",
            Family::S3 => "S3",
            Family::S4 => "S4",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Family::S1),
            "S2" => Ok(Family::S2),
            "S3" => Ok(Family::S3),
            "S4" => Ok(Family::S4),
            other => Err(Error::BadInput(format!("unknown family '{other}'"))),
        }
    }
}

/// Discrete-time linear plant x+ = A x + B u + w, w ~ N(0, sigma_w^2 I).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub sigma_w: f64,
    pub name: String,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sigma_w: f64, name: &str) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if !(sigma_w >= 0.0) {
            return Err(Error::BadInput(format!("sigma_w = {sigma_w} must be >= 0")));
        }
        let rho = spectral_radius(&a)?;
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(LinearSystem {
            a,
            b,
            sigma_w,
            name: name.to_string(),
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
}

/// Planar two-link manipulator with revolute joints, point masses at the
/// link tips, viscous joint damping, and torque inputs. Angles are measured
/// from the downward vertical, so the hanging configuration is the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLinkArm {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    pub gravity: f64,
    pub damping: f64,
    pub dt: f64,
}

impl Default for TwoLinkArm {
    fn default() -> Self {
        TwoLinkArm {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            // Moderate gravity with real joint damping: every leave-one-out
            // gain keeps the closed loop bounded from Sigma0-scale starts,
            // so plant-cost deltas measure the model, not blowup sentinels.
            gravity: 4.0,
            damping: 1.0,
            dt: 0.05,
        }
    }
}

impl TwoLinkArm {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.m1, self.m2, self.l1, self.l2, self.damping, self.dt];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.gravity >= 0.0) {
            return Err(Error::BadInput(format!("non-physical arm parameters {self:?}")));
        }
        Ok(())
    }

    /// Joint accelerations from M(q) qdd + C(q, qd) qd + g(q) + D qd = tau.
    fn accel(&self, q1: f64, q2: f64, dq1: f64, dq2: f64, tau1: f64, tau2: f64) -> (f64, f64) {
        let (m1, m2, l1, l2) = (self.m1, self.m2, self.l1, self.l2);
        let c2 = q2.cos();
        let s2 = q2.sin();
        let m11 = (m1 + m2) * l1 * l1 + m2 * l2 * l2 + 2.0 * m2 * l1 * l2 * c2;
        let m12 = m2 * l2 * l2 + m2 * l1 * l2 * c2;
        let m22 = m2 * l2 * l2;
        let h = m2 * l1 * l2 * s2;
        let cor1 = -h * (2.0 * dq1 * dq2 + dq2 * dq2);
        let cor2 = h * dq1 * dq1;
        let g = self.gravity;
        let grav1 = (m1 + m2) * g * l1 * q1.sin() + m2 * g * l2 * (q1 + q2).sin();
        let grav2 = m2 * g * l2 * (q1 + q2).sin();
        let rhs1 = tau1 - cor1 - grav1 - self.damping * dq1;
        let rhs2 = tau2 - cor2 - grav2 - self.damping * dq2;
        // det = m11 m22 - m12^2 >= m2 l2^2 (m1 l1^2 + residual) > 0.
        let det = m11 * m22 - m12 * m12;
        (
            (m22 * rhs1 - m12 * rhs2) / det,
            (m11 * rhs2 - m12 * rhs1) / det,
        )
    }

    /// State derivative; state is (q1, q2, dq1, dq2), input is joint torque.
    pub fn deriv(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let (dd1, dd2) = self.accel(x[0], x[1], x[2], x[3], u[0], u[1]);
        DVector::from_column_slice(&[x[2], x[3], dd1, dd2])
    }

    /// One fixed-step RK4 integration step over dt.
    pub fn rk4_step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let h = self.dt;
        let k1 = self.deriv(x, u);
        let k2 = self.deriv(&(x + &k1 * (h / 2.0)), u);
        let k3 = self.deriv(&(x + &k2 * (h / 2.0)), u);
        let k4 = self.deriv(&(x + &k3 * h), u);
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

/// A benchmark plant: either an exactly linear system or the manipulator.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemModel {
    Linear(LinearSystem),
    Arm { arm: TwoLinkArm, sigma_w: f64 },
}

impl SystemModel {
    pub fn n_x(&self) -> usize {
        match self {
            SystemModel::Linear(s) => s.n_x(),
            SystemModel::Arm { .. } => 4,
        }
    }

    pub fn n_u(&self) -> usize {
        match self {
            SystemModel::Linear(s) => s.n_u(),
            SystemModel::Arm { .. } => 2,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            SystemModel::Linear(s) => &s.name,
            SystemModel::Arm { .. } => "S4",
        }
    }

    pub fn sigma_w(&self) -> f64 {
        match self {
            SystemModel::Linear(s) => s.sigma_w,
            SystemModel::Arm { sigma_w, .. } => *sigma_w,
        }
    }

    /// Deterministic one-step map (no process noise). `mismatch` bends the
    /// linear plant by adding mismatch * tanh(x) elementwise; it must be
    /// zero for the manipulator, whose nonlinearity is intrinsic.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, mismatch: f64) -> Result<DVector<f64>> {
        match self {
            SystemModel::Linear(s) => {
                let mut next = &s.a * x + &s.b * u;
                if mismatch != 0.0 {
                    for i in 0..next.len() {
                        next[i] += mismatch * x[i].tanh();
                    }
                }
                Ok(next)
            }
            SystemModel::Arm { arm, .. } => {
                if mismatch != 0.0 {
                    return Err(Error::BadInput(
                        "mismatch strength applies to linear plants only".into(),
                    ));
                }
                Ok(arm.rk4_step(x, u))
            }
        }
    }
}

/// Matrix exponential by scaling-and-squaring with a Taylor kernel. The
/// argument is scaled below 1/2 in norm, where 20 terms exhaust f64.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(m.is_square());
    let n = m.nrows();
    let norm = m.norm();
    let squarings = if norm <= 0.5 {
        0
    } else {
        (norm / 0.5).log2().ceil() as i32
    };
    let a = m / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::identity(n, n);
    for j in 1..=20 {
        term = (&term * &a) / j as f64;
        sum += &term;
        if term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Zero-order-hold discretization of xdot = A x + B u over step dt via the
/// augmented-matrix exponential.
pub fn zoh_discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    let e = expm(&(aug * dt));
    (
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, m)).into_owned(),
    )
}

fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Dense random (A, B) with A rescaled to the exact target spectral radius.
fn random_stable_pair(
    rng: &mut ChaCha8Rng,
    n_x: usize,
    n_u: usize,
    rho_target: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let raw = randn_matrix(rng, n_x, n_x);
    let rho = spectral_radius(&raw)?;
    if rho <= f64::EPSILON {
        return Err(Error::NumericalFailure("degenerate random matrix".into()));
    }
    Ok((raw * (rho_target / rho), randn_matrix(rng, n_x, n_u)))
}

/// Instantiate a benchmark family. `s3_states` picks the S3 size (8 states
/// with 3 inputs, or 10 with 4); `rho_target` is the spectral radius the
/// generated S2/S3 dynamics are rescaled to.
pub fn make_system(
    family: Family,
    seed: u64,
    sigma_w: f64,
    s3_states: usize,
    rho_target: f64,
) -> Result<SystemModel> {
    if !(rho_target > 0.0 && rho_target <= MAX_RHO_TARGET) {
        return Err(Error::BadInput(format!(
            "rho_target = {rho_target} outside (0, {MAX_RHO_TARGET}]"
        )));
    }
    let mut rng = stream_rng(seed, STREAM_SYSTEM, 0);
    match family {
        Family::S1 => {
            // Unit mass-spring-damper: xdot = [[0, 1], [-1, -1]] x + [0, 1] u.
            let a_c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
            let b_c = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
            let (a, b) = zoh_discretize(&a_c, &b_c, 0.1);
            Ok(SystemModel::Linear(LinearSystem::new(a, b, sigma_w, "S1")?))
        }
        Family::S2 => {
            let (a, b) = random_stable_pair(&mut rng, 4, 2, rho_target)?;
            Ok(SystemModel::Linear(LinearSystem::new(a, b, sigma_w, "S2")?))
        }
        Family::S3 => {
            let n_u = match s3_states {
                8 => 3,
                10 => 4,
                other => {
                    return Err(Error::BadInput(format!(
                        "S3 supports 8 or 10 states, got {other}"
                    )))
                }
            };
            let (a, b) = random_stable_pair(&mut rng, s3_states, n_u, rho_target)?;
            Ok(SystemModel::Linear(LinearSystem::new(a, b, sigma_w, "S3")?))
        }
        Family::S4 => {
            let arm = TwoLinkArm::default();
            arm.validate()?;
            Ok(SystemModel::Arm { arm, sigma_w })
        }
    }
}
