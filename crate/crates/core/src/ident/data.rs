use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// One observed step (x, u, x+) of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub x_plus: DVector<f64>,
}

impl Transition {
    pub fn new(x: DVector<f64>, u: DVector<f64>, x_plus: DVector<f64>) -> Self {
        Transition { x, u, x_plus }
    }

    /// Stacked regressor input z = [x; u].
    pub fn z(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.x.len() + self.u.len());
        z.rows_mut(0, self.x.len()).copy_from(&self.x);
        z.rows_mut(self.x.len(), self.u.len()).copy_from(&self.u);
        z
    }
}

/// A contiguous rollout: at least one transition, consistent dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: usize,
    transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn new(id: usize, transitions: Vec<Transition>) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::Empty(format!("trajectory {id} has no transitions")));
        }
        let n_x = transitions[0].x.len();
        let n_u = transitions[0].u.len();
        for (s, t) in transitions.iter().enumerate() {
            if t.x.len() != n_x || t.x_plus.len() != n_x || t.u.len() != n_u {
                return Err(Error::DimensionMismatch(format!(
                    "trajectory {id}, step {s}: inconsistent state/input dimensions"
                )));
            }
            let finite = t.x.iter().chain(t.u.iter()).chain(t.x_plus.iter());
            if !finite.clone().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("trajectory {id}, step {s}")));
            }
        }
        Ok(Trajectory { id, transitions })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Gram matrix sum_s z_s z_s' of this trajectory (q x q).
    pub fn gram(&self) -> DMatrix<f64> {
        let q = self.transitions[0].x.len() + self.transitions[0].u.len();
        let mut g = DMatrix::zeros(q, q);
        for t in &self.transitions {
            let z = t.z();
            g.ger(1.0, &z, &z, 1.0);
        }
        g
    }
}

/// A collection of trajectories with uniform dimensions and unique ids.
///
/// Public construction requires at least two trajectories so that dropping
/// one always leaves a well-posed fit; the crate-internal [`Dataset::leave_one_out`]
/// may produce singleton datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_x: usize,
    n_u: usize,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(n_x: usize, n_u: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.len() < 2 {
            return Err(Error::TooFewTrajectories {
                required: 2,
                actual: trajectories.len(),
            });
        }
        Self::with_min(n_x, n_u, trajectories, 2)
    }

    /// Construction for derived datasets (test splits, leave-one-out copies)
    /// where a single trajectory is acceptable.
    pub fn single_allowed(n_x: usize, n_u: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        Self::with_min(n_x, n_u, trajectories, 1)
    }

    fn with_min(
        n_x: usize,
        n_u: usize,
        trajectories: Vec<Trajectory>,
        min: usize,
    ) -> Result<Self> {
        if n_x == 0 || n_u == 0 {
            return Err(Error::BadInput(
                "state and input dimensions must be positive".to_string(),
            ));
        }
        if trajectories.len() < min {
            return Err(Error::TooFewTrajectories {
                required: min,
                actual: trajectories.len(),
            });
        }
        let mut ids: Vec<usize> = trajectories.iter().map(|t| t.id()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateId(w[0]));
        }
        for t in &trajectories {
            let first = &t.transitions()[0];
            if first.x.len() != n_x || first.u.len() != n_u {
                return Err(Error::DimensionMismatch(format!(
                    "trajectory {} has dims ({}, {}), dataset expects ({n_x}, {n_u})",
                    t.id(),
                    first.x.len(),
                    first.u.len()
                )));
            }
        }
        Ok(Dataset {
            n_x,
            n_u,
            trajectories,
        })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    /// Regressor input dimension q = n_x + n_u.
    pub fn q(&self) -> usize {
        self.n_x + self.n_u
    }

    /// Parameter dimension p = n_x * q.
    pub fn p(&self) -> usize {
        self.n_x * self.q()
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn total_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Copy with trajectory at position `idx` removed. The result may hold a
    /// single trajectory even though public constructors require two.
    pub fn leave_one_out(&self, idx: usize) -> Result<Dataset> {
        if idx >= self.trajectories.len() {
            return Err(Error::BadInput(format!(
                "trajectory index {idx} out of range (len {})",
                self.trajectories.len()
            )));
        }
        let mut kept = self.trajectories.clone();
        kept.remove(idx);
        Dataset::single_allowed(self.n_x, self.n_u, kept)
    }
}

/// Parameters of the linear model x+ = A x + B u, stored as the row-major
/// stacking of [A B]: theta[i*q + j] is row i, column j of [A B]. With this
/// layout the per-step regressor is the Kronecker product I_{n_x} (x) z' and
/// the ridge normal matrix is block diagonal with n_x identical q x q blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    theta: DVector<f64>,
    n_x: usize,
    n_u: usize,
}

impl ParamVector {
    pub fn from_theta(theta: DVector<f64>, n_x: usize, n_u: usize) -> Result<Self> {
        if n_x == 0 || n_u == 0 {
            return Err(Error::BadInput(
                "state and input dimensions must be positive".to_string(),
            ));
        }
        if theta.len() != n_x * (n_x + n_u) {
            return Err(Error::DimensionMismatch(format!(
                "theta has length {}, expected {}",
                theta.len(),
                n_x * (n_x + n_u)
            )));
        }
        Ok(ParamVector { theta, n_x, n_u })
    }

    pub fn from_ab(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.nrows() || b.ncols() == 0 || a.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let n_x = a.nrows();
        let n_u = b.ncols();
        let q = n_x + n_u;
        let mut theta = DVector::zeros(n_x * q);
        for i in 0..n_x {
            for j in 0..n_x {
                theta[i * q + j] = a[(i, j)];
            }
            for l in 0..n_u {
                theta[i * q + n_x + l] = b[(i, l)];
            }
        }
        Ok(ParamVector { theta, n_x, n_u })
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn q(&self) -> usize {
        self.n_x + self.n_u
    }

    pub fn p(&self) -> usize {
        self.theta.len()
    }

    /// View of row i of [A B] as a slice of theta.
    pub fn row(&self, i: usize) -> &[f64] {
        let q = self.q();
        &self.theta.as_slice()[i * q..(i + 1) * q]
    }

    pub fn a_matrix(&self) -> DMatrix<f64> {
        let q = self.q();
        DMatrix::from_fn(self.n_x, self.n_x, |i, j| self.theta[i * q + j])
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let q = self.q();
        DMatrix::from_fn(self.n_x, self.n_u, |i, l| self.theta[i * q + self.n_x + l])
    }

    /// Coordinate m interpreted in the [A B] grid: (row, col, is_b_column).
    /// Columns 0..n_x of the grid are A, the rest are B.
    pub fn coord(&self, m: usize) -> Result<(usize, usize, bool)> {
        if m >= self.p() {
            return Err(Error::BadInput(format!(
                "coordinate {m} out of range (p = {})",
                self.p()
            )));
        }
        let q = self.q();
        let i = m / q;
        let c = m % q;
        if c < self.n_x {
            Ok((i, c, false))
        } else {
            Ok((i, c - self.n_x, true))
        }
    }

    /// Model prediction A x + B u without materializing A and B.
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let q = self.q();
        let mut out = DVector::zeros(self.n_x);
        for i in 0..self.n_x {
            let row = &self.theta.as_slice()[i * q..(i + 1) * q];
            let mut acc = 0.0;
            for j in 0..self.n_x {
                acc += row[j] * x[j];
            }
            for l in 0..self.n_u {
                acc += row[self.n_x + l] * u[l];
            }
            out[i] = acc;
        }
        out
    }

    /// Residual x+ - (A x + B u) for one transition.
    pub fn residual(&self, t: &Transition) -> DVector<f64> {
        &t.x_plus - self.predict(&t.x, &t.u)
    }
}

/// Per-step regressor Phi(x, u) = I_{n_x} (x) [x; u]', shaped n_x x p, so
/// that Phi * theta = A x + B u. Materialized only where a test or caller
/// wants the generic form; hot paths use the block structure directly.
pub fn regressor(x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let n_x = x.len();
    let q = n_x + u.len();
    let mut phi = DMatrix::zeros(n_x, n_x * q);
    for i in 0..n_x {
        for j in 0..n_x {
            phi[(i, i * q + j)] = x[j];
        }
        for l in 0..u.len() {
            phi[(i, i * q + n_x + l)] = u[l];
        }
    }
    phi
}
