//! Subcommand bodies. Each one is a thin bridge: load and validate inputs,
//! call the library, write outputs atomically.

use std::path::Path;

use trajinf::pipeline::run_algorithm1;
use trajinf_bench::ablation::{lambda_sweep, mismatch_sweep, n_sweep, radius_sweep, run_cell};
use trajinf_bench::{evaluate, AblationCell, AblationRow, Family};

use crate::config::{AblateParam, RunConfig};
use crate::errors::{CliError, CliResult};
use crate::io;

fn family_check(file: Family, config: Family) -> CliResult<()> {
    if file != config {
        return Err(CliError::Config(format!(
            "config is for family {} but the dataset holds {}",
            config.label(),
            file.label()
        )));
    }
    Ok(())
}

/// Simulate the configured system and write the train + held-out split.
pub fn cmd_generate(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let seed = seed
        .or_else(|| cfg.experiment.seeds.first().copied())
        .unwrap_or(0);
    let data = trajinf_bench::make_dataset(&cfg.experiment, seed)?;
    io::write_dataset(out, cfg.experiment.family, &data)
}

/// Score every training trajectory against the stored held-out set.
pub fn cmd_influence(cfg: &RunConfig, data_path: &Path, out: &Path) -> CliResult<()> {
    let stored = io::read_dataset(data_path)?;
    family_check(stored.family, cfg.experiment.family)?;
    let n_x = stored.train.n_x();
    let n_u = stored.train.n_u();
    let report = run_algorithm1(
        &stored.train,
        &stored.test,
        cfg.experiment.lambda,
        &cfg.experiment.q_matrix(n_x),
        &cfg.experiment.r_matrix(n_u),
        &cfg.experiment.sigma0_matrix(n_x),
        &cfg.solver,
    )?;
    io::write_report(out, stored.family, &report)?;
    io::write_timings(out, &report.timings)
}

/// Full leave-one-out retraining sweep over the stored dataset.
pub fn cmd_loto(cfg: &RunConfig, data_path: &Path, out: &Path) -> CliResult<()> {
    let stored = io::read_dataset(data_path)?;
    family_check(stored.family, cfg.experiment.family)?;
    let family = stored.family;
    let data = stored.into_generated();
    let truth = trajinf_bench::loto_ground_truth(&data, &cfg.experiment)?;
    io::write_truth(out, family, &truth)
}

/// Grade a report against ground truth; returns the console rendering.
pub fn cmd_evaluate(report_path: &Path, truth_path: &Path, out: &Path) -> CliResult<String> {
    let (report_family, report) = io::read_report(report_path)?;
    let (truth_family, truth) = io::read_truth(truth_path)?;
    if report_family != truth_family {
        return Err(CliError::Data(format!(
            "report is for {} but ground truth is for {}",
            report_family.label(),
            truth_family.label()
        )));
    }
    let rows = evaluate(report_family.label(), &report, &truth)?;
    io::atomic_write(out, &io::render_metrics_csv(&rows))?;
    Ok(io::render_metrics_table(&rows))
}

fn build_cells(cfg: &RunConfig) -> CliResult<Vec<AblationCell>> {
    let spec = cfg.ablate.as_ref().ok_or_else(|| {
        CliError::Config("ablate requires ablate_param and ablate_values in the config".into())
    })?;
    let base = &cfg.experiment;
    Ok(match spec.param {
        AblateParam::NTraj => {
            let ns: Vec<usize> = spec.values.iter().map(|v| *v as usize).collect();
            n_sweep(base, &ns)
        }
        AblateParam::Lambda => lambda_sweep(base, &spec.values),
        AblateParam::RhoTarget => radius_sweep(base, &spec.values),
        AblateParam::Mismatch => mismatch_sweep(base, &spec.values),
    })
}

/// Run the configured sweep cell by cell. Individual failures land in the
/// CSV's error column; the command only fails if no cell succeeded.
pub fn cmd_ablate(cfg: &RunConfig, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let mut cells = build_cells(cfg)?;
    if let Some(s) = seed {
        for cell in &mut cells {
            cell.config.seeds = vec![s];
        }
    }
    let mut rows: Vec<AblationRow> = Vec::new();
    let mut any_ok = false;
    let mut first_err: Option<CliError> = None;
    for cell in &cells {
        for &cell_seed in &cell.config.seeds {
            match run_cell(&cell.config, cell_seed) {
                Ok(result) => {
                    any_ok = true;
                    for row in result.rows {
                        rows.push(AblationRow {
                            family: cell.config.family.label().to_string(),
                            param: cell.param.clone(),
                            value: cell.value.clone(),
                            seed: cell_seed,
                            target: row.target.label().to_string(),
                            method: row.method.label().to_string(),
                            n_pairs: row.n_pairs,
                            metrics: Some(row.metrics),
                            error: None,
                        });
                    }
                }
                Err(e) => {
                    let text = e.to_string();
                    // First failure decides the exit class if nothing works.
                    if first_err.is_none() {
                        first_err = Some(CliError::from(e));
                    }
                    rows.push(AblationRow {
                        family: cell.config.family.label().to_string(),
                        param: cell.param.clone(),
                        value: cell.value.clone(),
                        seed: cell_seed,
                        target: String::new(),
                        method: String::new(),
                        n_pairs: 0,
                        metrics: None,
                        error: Some(text),
                    });
                }
            }
        }
    }
    io::atomic_write(out, &io::render_ablation_csv(&rows))?;
    if !any_ok {
        return Err(first_err
            .unwrap_or_else(|| CliError::Numerics("every ablation cell failed".into())));
    }
    Ok(())
}
