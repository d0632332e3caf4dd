//! Parameter sweeps run cell by cell, with per-cell error capture.

use trajinf::pipeline::{run_algorithm1, InfluenceReport, SolverOptions};
use trajinf::Result;

use crate::evaluate::{evaluate, EvalRow};
use crate::experiment::{make_dataset, ExperimentConfig};
use crate::groundtruth::{loto_ground_truth, GroundTruth};
use crate::metrics::EvalMetrics;

/// One sweep cell: a full config plus the (parameter, value) label pair
/// that distinguishes it in the output table.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub param: String,
    pub value: String,
    pub config: ExperimentConfig,
}

/// Long-format result row. `error` is set (and `metrics` absent) when the
/// cell failed; the sweep itself never aborts.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub family: String,
    pub param: String,
    pub value: String,
    pub seed: u64,
    pub target: String,
    pub method: String,
    pub n_pairs: usize,
    pub metrics: Option<EvalMetrics>,
    pub error: Option<String>,
}

/// Everything produced by one successful (cell, seed) run.
pub struct CellOutput {
    pub report: InfluenceReport,
    pub truth: GroundTruth,
    pub rows: Vec<EvalRow>,
}

/// Run one config at one seed end to end: generate, score, retrain, grade.
pub fn run_cell(cfg: &ExperimentConfig, seed: u64) -> Result<CellOutput> {
    let data = make_dataset(cfg, seed)?;
    let report = run_algorithm1(
        &data.train,
        &data.test,
        cfg.lambda,
        &cfg.q_matrix(data.train.n_x()),
        &cfg.r_matrix(data.train.n_u()),
        &cfg.sigma0_matrix(data.train.n_x()),
        &SolverOptions::default(),
    )?;
    let truth = loto_ground_truth(&data, cfg)?;
    let rows = evaluate(data.system.name(), &report, &truth)?;
    Ok(CellOutput {
        report,
        truth,
        rows,
    })
}

/// Run every cell at every seed in its config. Failures become rows with
/// the error recorded; successful cells contribute one row per
/// (target, method) pairing.
pub fn ablation_sweep(cells: &[AblationCell]) -> Vec<AblationRow> {
    let mut out = Vec::new();
    for cell in cells {
        for &seed in &cell.config.seeds {
            match run_cell(&cell.config, seed) {
                Ok(result) => {
                    for row in result.rows {
                        out.push(AblationRow {
                            family: cell.config.family.label().to_string(),
                            param: cell.param.clone(),
                            value: cell.value.clone(),
                            seed,
                            target: row.target.label().to_string(),
                            method: row.method.label().to_string(),
                            n_pairs: row.n_pairs,
                            metrics: Some(row.metrics),
                            error: None,
                        });
                    }
                }
                Err(e) => out.push(AblationRow {
                    family: cell.config.family.label().to_string(),
                    param: cell.param.clone(),
                    value: cell.value.clone(),
                    seed,
                    target: String::new(),
                    method: String::new(),
                    n_pairs: 0,
                    metrics: None,
                    error: Some(e.to_string()),
                }),
            }
        }
    }
    out
}

fn cell(param: &str, value: String, config: ExperimentConfig) -> AblationCell {
    AblationCell {
        param: param.to_string(),
        value,
        config,
    }
}

/// Dataset-size sweep.
pub fn n_sweep(base: &ExperimentConfig, ns: &[usize]) -> Vec<AblationCell> {
    ns.iter()
        .map(|&n| {
            let mut c = base.clone();
            c.n_traj = n;
            cell("n_traj", n.to_string(), c)
        })
        .collect()
}

/// Ridge-strength sweep.
pub fn lambda_sweep(base: &ExperimentConfig, lambdas: &[f64]) -> Vec<AblationCell> {
    lambdas
        .iter()
        .map(|&l| {
            let mut c = base.clone();
            c.lambda = l;
            cell("lambda", format!("{l:e}"), c)
        })
        .collect()
}

/// Closed-loop conditioning sweep via the generated spectral radius.
pub fn radius_sweep(base: &ExperimentConfig, radii: &[f64]) -> Vec<AblationCell> {
    radii
        .iter()
        .map(|&rho| {
            let mut c = base.clone();
            c.rho_target = rho;
            cell("rho_target", format!("{rho}"), c)
        })
        .collect()
}

/// Plant-mismatch sweep; plant-level ground truth switches on.
pub fn mismatch_sweep(base: &ExperimentConfig, strengths: &[f64]) -> Vec<AblationCell> {
    strengths
        .iter()
        .map(|&eps| {
            let mut c = base.clone();
            c.mismatch_strength = eps;
            c.plant_truth = true;
            cell("mismatch", format!("{eps}"), c)
        })
        .collect()
}
