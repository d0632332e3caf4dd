//! Experiment configuration and deterministic dataset generation.

use nalgebra::DMatrix;
use trajinf::ident::Dataset;
use trajinf::{Error, Result};

use crate::simulate::{simulate, stream_rng, ExcitationSpec, STREAM_TEST, STREAM_TRAIN};
use crate::systems::{make_system, Family, SystemModel, DEFAULT_RHO_TARGET, MAX_RHO_TARGET};

/// Fraction of extra trajectories simulated as the held-out test set.
pub const TEST_FRACTION: f64 = 0.2;

/// Monte-Carlo settings for plant-level closed-loop cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantCostOptions {
    pub horizon: usize,
    pub n_rollouts: usize,
}

impl Default for PlantCostOptions {
    fn default() -> Self {
        PlantCostOptions {
            horizon: 400,
            n_rollouts: 64,
        }
    }
}

/// One benchmark cell: family, data sizes, noise, regularization, weights,
/// excitation, and the plant-mismatch knob.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub family: Family,
    pub n_traj: usize,
    pub t_len: usize,
    pub sigma_w: f64,
    pub lambda: f64,
    /// Q = q_diag I, R = r_diag I, Sigma0 = sigma0_diag I.
    pub q_diag: f64,
    pub r_diag: f64,
    pub sigma0_diag: f64,
    pub seeds: Vec<u64>,
    pub excitation: ExcitationSpec,
    /// Plant-side nonlinearity strength (linear families only).
    pub mismatch_strength: f64,
    /// S3 size variant: 8 states (3 inputs) or 10 states (4 inputs).
    pub s3_states: usize,
    /// Spectral radius the generated dynamics are rescaled to.
    pub rho_target: f64,
    /// Evaluate ground-truth deletion effects on the plant-level cost.
    pub plant_truth: bool,
    pub plant: PlantCostOptions,
}

impl ExperimentConfig {
    /// Family defaults: (N, T) = (30, 25) for S1, (50, 30) for S2 and S4,
    /// (80, 30) for S3; noise 0.03, ridge 1e-5, Q = I, R = 0.1 I,
    /// Sigma0 = I.
    pub fn defaults(family: Family) -> Self {
        let (n_traj, t_len) = match family {
            Family::S1 => (30, 25),
            Family::S2 => (50, 30),
            Family::S3 => (80, 30),
            Family::S4 => (50, 30),
        };
        let excitation = match family {
            // The manipulator is excited hard enough that trajectories span
            // small and large swings; amplitude spread is what gives the
            // deletion effects a measurable plant-level component.
            Family::S4 => ExcitationSpec {
                u_std: 2.0,
                x0_std: 1.5,
            },
            _ => ExcitationSpec::default(),
        };
        ExperimentConfig {
            family,
            n_traj,
            t_len,
            sigma_w: 0.03,
            lambda: 1e-5,
            q_diag: 1.0,
            r_diag: 0.1,
            sigma0_diag: 1.0,
            seeds: vec![0],
            excitation,
            mismatch_strength: 0.0,
            s3_states: 8,
            rho_target: DEFAULT_RHO_TARGET,
            plant_truth: matches!(family, Family::S4),
            plant: PlantCostOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj < 2 {
            return Err(Error::BadInput(format!(
                "need at least 2 trajectories, got {}",
                self.n_traj
            )));
        }
        if self.t_len == 0 {
            return Err(Error::BadInput("trajectory length 0".into()));
        }
        if !(self.sigma_w >= 0.0) {
            return Err(Error::BadInput(format!("sigma_w = {}", self.sigma_w)));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::BadInput(format!("lambda = {} must be > 0", self.lambda)));
        }
        if !(self.q_diag >= 0.0) || !(self.r_diag > 0.0) || !(self.sigma0_diag >= 0.0) {
            return Err(Error::BadInput(format!(
                "weights (q, r, sigma0) = ({}, {}, {})",
                self.q_diag, self.r_diag, self.sigma0_diag
            )));
        }
        if !(self.mismatch_strength >= 0.0) {
            return Err(Error::BadInput(format!(
                "mismatch strength {}",
                self.mismatch_strength
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::BadInput("empty seed list".into()));
        }
        if self.plant.horizon == 0 || self.plant.n_rollouts == 0 {
            return Err(Error::BadInput("plant cost needs horizon and rollouts".into()));
        }
        if self.family == Family::S3 && self.s3_states != 8 && self.s3_states != 10 {
            return Err(Error::BadInput(format!(
                "s3_states must be 8 or 10, got {}",
                self.s3_states
            )));
        }
        if !(self.rho_target > 0.0 && self.rho_target <= MAX_RHO_TARGET) {
            return Err(Error::BadInput(format!(
                "rho_target must lie in (0, {MAX_RHO_TARGET}], got {}",
                self.rho_target
            )));
        }
        self.excitation.validate()
    }

    pub fn n_test(&self) -> usize {
        ((self.n_traj as f64 * TEST_FRACTION).ceil() as usize).max(1)
    }

    pub fn q_matrix(&self, n_x: usize) -> DMatrix<f64> {
        DMatrix::identity(n_x, n_x) * self.q_diag
    }

    pub fn r_matrix(&self, n_u: usize) -> DMatrix<f64> {
        DMatrix::identity(n_u, n_u) * self.r_diag
    }

    pub fn sigma0_matrix(&self, n_x: usize) -> DMatrix<f64> {
        DMatrix::identity(n_x, n_x) * self.sigma0_diag
    }
}

/// A generated benchmark instance: the plant and a train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub system: SystemModel,
    pub train: Dataset,
    pub test: Dataset,
    pub seed: u64,
}

/// Deterministically generate the plant and both datasets for one seed.
/// Train trajectories use stream (TRAIN, i), test (TEST, i), so the split
/// never shares randomness and generation order is immaterial.
pub fn make_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<GeneratedData> {
    cfg.validate()?;
    let system = make_system(cfg.family, seed, cfg.sigma_w, cfg.s3_states, cfg.rho_target)?;
    let (n_x, n_u) = (system.n_x(), system.n_u());
    let mut train = Vec::with_capacity(cfg.n_traj);
    for i in 0..cfg.n_traj {
        let mut rng = stream_rng(seed, STREAM_TRAIN, i as u64);
        train.push(simulate(&system, &cfg.excitation, cfg.t_len, i, &mut rng)?);
    }
    let n_test = cfg.n_test();
    let mut test = Vec::with_capacity(n_test);
    for i in 0..n_test {
        let mut rng = stream_rng(seed, STREAM_TEST, i as u64);
        test.push(simulate(
            &system,
            &cfg.excitation,
            cfg.t_len,
            cfg.n_traj + i,
            &mut rng,
        )?);
    }
    Ok(GeneratedData {
        system,
        train: Dataset::new(n_x, n_u, train)?,
        test: Dataset::single_allowed(n_x, n_u, test)?,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_family_table() {
        let s1 = ExperimentConfig::defaults(Family::S1);
        assert_eq!((s1.n_traj, s1.t_len), (30, 25));
        let s2 = ExperimentConfig::defaults(Family::S2);
        assert_eq!((s2.n_traj, s2.t_len), (50, 30));
        let s3 = ExperimentConfig::defaults(Family::S3);
        assert_eq!((s3.n_traj, s3.t_len), (80, 30));
        let s4 = ExperimentConfig::defaults(Family::S4);
        assert_eq!((s4.n_traj, s4.t_len), (50, 30));
        for cfg in [&s1, &s2, &s3, &s4] {
            assert_eq!(cfg.sigma_w, 0.03);
            assert_eq!(cfg.lambda, 1e-5);
            assert_eq!(cfg.q_diag, 1.0);
            assert_eq!(cfg.r_diag, 0.1);
            assert_eq!(cfg.sigma0_diag, 1.0);
            cfg.validate().unwrap();
        }
        assert!(s4.plant_truth);
        assert!(!s2.plant_truth);
    }

    #[test]
    fn dataset_sizes_follow_config() {
        let cfg = ExperimentConfig::defaults(Family::S1);
        let data = make_dataset(&cfg, 3).unwrap();
        assert_eq!(data.train.len(), 30);
        assert_eq!(data.test.len(), 6);
        assert_eq!(data.train.trajectories()[0].len(), 25);
        assert_eq!(data.train.n_x(), 2);
        assert_eq!(data.train.n_u(), 1);
        // Test ids continue after train ids.
        assert_eq!(data.test.trajectories()[0].id(), 30);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ExperimentConfig::defaults(Family::S2);
        let a = make_dataset(&cfg, 9).unwrap();
        let b = make_dataset(&cfg, 9).unwrap();
        assert_eq!(a, b);
        let c = make_dataset(&cfg, 10).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::defaults(Family::S1);
        cfg.n_traj = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Family::S1);
        cfg.lambda = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Family::S1);
        cfg.r_diag = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::defaults(Family::S1);
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }
}
