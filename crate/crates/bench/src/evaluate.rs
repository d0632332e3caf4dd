//! Score-versus-truth evaluation grid: one row per (target, method).

use std::collections::HashMap;

use trajinf::pipeline::InfluenceReport;
use trajinf::{Error, Result};

use crate::groundtruth::GroundTruth;
use crate::metrics::{compute_metrics, EvalMetrics, TOP_K};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    PredLoss,
    NominalJ,
    PlantCost,
}

impl Target {
    pub fn label(self) -> &'static str {
        match self {
            Target::PredLoss => "pred_loss",
            Target::NominalJ => "nominal_j",
            Target::PlantCost => "plant_cost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Residual,
    GradOnly,
    If1,
    If2,
    ExactLoto,
    Retraining,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Residual => "residual",
            Method::GradOnly => "grad_only",
            Method::If1 => "if1",
            Method::If2 => "if2",
            Method::ExactLoto => "exact_loto",
            Method::Retraining => "retraining",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub system: String,
    pub target: Target,
    pub method: Method,
    /// Non-missing (prediction, truth) pairs behind the metrics.
    pub n_pairs: usize,
    pub metrics: EvalMetrics,
}

fn method_time(report: &InfluenceReport, method: Method, retrain_s: f64) -> Option<f64> {
    let t = &report.timings;
    match method {
        Method::Residual | Method::GradOnly => Some(t.baseline_s),
        Method::If1 => Some(t.if1_s),
        Method::If2 => t.if2_s,
        Method::ExactLoto => Some(t.exact_loto_s),
        Method::Retraining => Some(retrain_s),
    }
}

/// Compare every score in the report against every ground-truth target it
/// predicts. Rows appear only when at least two non-missing pairs exist.
pub fn evaluate(
    system: &str,
    report: &InfluenceReport,
    truth: &GroundTruth,
) -> Result<Vec<EvalRow>> {
    let by_id: HashMap<usize, &crate::groundtruth::TruthRecord> =
        truth.records.iter().map(|r| (r.traj_id, r)).collect();
    if report.records.is_empty() || truth.records.is_empty() {
        return Err(Error::IdMismatch("empty report or truth".into()));
    }
    let mut aligned = Vec::with_capacity(report.records.len());
    for rec in &report.records {
        match by_id.get(&rec.traj_id) {
            Some(t) => aligned.push((rec, *t)),
            None => {
                return Err(Error::IdMismatch(format!(
                    "trajectory {} has scores but no ground truth",
                    rec.traj_id
                )))
            }
        }
    }
    if report.records.len() != truth.records.len() {
        return Err(Error::IdMismatch(format!(
            "{} score records vs {} truth records",
            report.records.len(),
            truth.records.len()
        )));
    }

    let targets = [
        (
            Target::PredLoss,
            aligned
                .iter()
                .map(|(_, t)| t.delta_pred)
                .collect::<Vec<_>>(),
        ),
        (Target::NominalJ, aligned.iter().map(|(_, t)| t.delta_j).collect()),
        (
            Target::PlantCost,
            aligned.iter().map(|(_, t)| t.delta_plant).collect(),
        ),
    ];
    let mut rows = Vec::new();
    for (target, truths) in targets {
        let methods: &[Method] = match target {
            Target::PredLoss => &[
                Method::Residual,
                Method::GradOnly,
                Method::If1,
                Method::ExactLoto,
                Method::Retraining,
            ],
            Target::NominalJ | Target::PlantCost => &[
                Method::Residual,
                Method::GradOnly,
                Method::If2,
                Method::Retraining,
            ],
        };
        for &method in methods {
            let mut pred = Vec::new();
            let mut tru = Vec::new();
            for ((rec, _), t) in aligned.iter().zip(&truths) {
                let p = match (method, target) {
                    (Method::Residual, _) => Some(rec.residual_norm),
                    (Method::GradOnly, Target::PredLoss) => Some(rec.grad_only_pred),
                    (Method::GradOnly, _) => rec.grad_only_j,
                    (Method::If1, _) => Some(rec.if1),
                    (Method::If2, _) => rec.if2,
                    (Method::ExactLoto, _) => Some(rec.exact_pred_delta),
                    (Method::Retraining, _) => *t,
                };
                if let (Some(p), Some(t)) = (p, *t) {
                    pred.push(p);
                    tru.push(t);
                }
            }
            if pred.len() < 2 {
                continue;
            }
            let mut metrics = compute_metrics(&pred, &tru, TOP_K)?;
            metrics.time_s = method_time(report, method, truth.retrain_wall_s);
            metrics.speedup = metrics
                .time_s
                .filter(|t| *t > 0.0)
                .map(|t| truth.retrain_wall_s / t);
            rows.push(EvalRow {
                system: system.to_string(),
                target,
                method,
                n_pairs: pred.len(),
                metrics,
            });
        }
    }
    Ok(rows)
}
