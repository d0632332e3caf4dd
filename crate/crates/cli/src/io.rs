//! File formats: line-delimited structured-text records for datasets,
//! influence reports, and retraining ground truth; flat CSV for metric
//! tables. Floats are written as 17-significant-digit decimals so every
//! write → read → write round trip is byte-identical, and all files are
//! written atomically (temp file + rename).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use trajinf::ident::{Dataset, Trajectory, Transition};
use trajinf::pipeline::{CostCounters, InfluenceReport, MethodTimings, ModelSummary, TrajectoryScores};
use trajinf_bench::{
    systems::TwoLinkArm, EvalRow, Family, GeneratedData, GroundTruth, LinearSystem, SystemModel,
    TruthRecord,
};

use crate::errors::{CliError, CliResult};

pub const DATASET_VERSION: u32 = 1;
pub const TRUTH_VERSION: u32 = 1;

/// 17 significant digits: enough to reproduce any f64 bit pattern exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_f64(x),
        None => "none".to_string(),
    }
}

/// Rows joined by ';', entries within a row by ','.
fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        if i > 0 {
            out.push(';');
        }
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(i, j)]));
        }
    }
    out
}

fn fmt_vec_rows(rows: &[DVector<f64>]) -> String {
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            out.push(';');
        }
        for j in 0..r.len() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(r[j]));
        }
    }
    out
}

pub fn atomic_write(path: &Path, content: &str) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, content)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Data(format!("cannot finalize {}: {e}", path.display())))?;
    Ok(())
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Line scanning

#[derive(Debug)]
struct Record<'a> {
    line_no: usize,
    tag: &'a str,
    fields: Vec<(&'a str, &'a str)>,
}

impl<'a> Record<'a> {
    fn parse(line: &'a str, line_no: usize) -> CliResult<Self> {
        let mut parts = line.split(' ').filter(|s| !s.is_empty());
        let tag = parts
            .next()
            .ok_or_else(|| CliError::Data(format!("line {line_no}: empty record")))?;
        let mut fields = Vec::new();
        for part in parts {
            let Some((k, v)) = part.split_once('=') else {
                return Err(CliError::Data(format!(
                    "line {line_no}: expected key=value, got '{part}'"
                )));
            };
            fields.push((k, v));
        }
        Ok(Record {
            line_no,
            tag,
            fields,
        })
    }

    fn get(&self, key: &str) -> CliResult<&'a str> {
        self.fields
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| {
                CliError::Data(format!(
                    "line {}: '{}' record is missing field '{key}'",
                    self.line_no, self.tag
                ))
            })
    }

    fn f64(&self, key: &str) -> CliResult<f64> {
        let raw = self.get(key)?;
        raw.parse::<f64>().map_err(|_| {
            CliError::Data(format!(
                "line {}: field '{key}' is not a number: '{raw}'",
                self.line_no
            ))
        })
    }

    fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        if self.get(key)? == "none" {
            Ok(None)
        } else {
            self.f64(key).map(Some)
        }
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> CliResult<T> {
        let raw = self.get(key)?;
        raw.parse::<T>().map_err(|_| {
            CliError::Data(format!(
                "line {}: field '{key}' has invalid value '{raw}'",
                self.line_no
            ))
        })
    }

    /// Reject fields outside the expected set; used by the dataset reader
    /// where any stray content means corruption.
    fn expect_only(&self, keys: &[&str]) -> CliResult<()> {
        for (k, _) in &self.fields {
            if !keys.contains(k) {
                return Err(CliError::Data(format!(
                    "line {}: unexpected field '{k}' in '{}' record",
                    self.line_no, self.tag
                )));
            }
        }
        Ok(())
    }
}

fn parse_rows(raw: &str, t: usize, dim: usize, line_no: usize, what: &str) -> CliResult<Vec<DVector<f64>>> {
    let rows: Vec<&str> = raw.split(';').collect();
    if rows.len() != t {
        return Err(CliError::Data(format!(
            "line {line_no}: '{what}' has {} rows, expected {t}",
            rows.len()
        )));
    }
    let mut out = Vec::with_capacity(t);
    for row in rows {
        let entries: Vec<&str> = row.split(',').collect();
        if entries.len() != dim {
            return Err(CliError::Data(format!(
                "line {line_no}: '{what}' row has {} entries, expected {dim}",
                entries.len()
            )));
        }
        let mut v = DVector::zeros(dim);
        for (j, e) in entries.iter().enumerate() {
            let x: f64 = e.parse().map_err(|_| {
                CliError::Data(format!("line {line_no}: '{what}' entry '{e}' is not a number"))
            })?;
            if !x.is_finite() {
                return Err(CliError::Data(format!(
                    "line {line_no}: '{what}' contains a non-finite value"
                )));
            }
            v[j] = x;
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_matrix(raw: &str, rows: usize, cols: usize, line_no: usize, what: &str) -> CliResult<DMatrix<f64>> {
    let vecs = parse_rows(raw, rows, cols, line_no, what)?;
    let mut m = DMatrix::zeros(rows, cols);
    for (i, v) in vecs.iter().enumerate() {
        m.row_mut(i).copy_from(&v.transpose());
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Dataset files

fn write_traj(out: &mut String, split: &str, traj: &Trajectory) {
    let xs: Vec<DVector<f64>> = traj.transitions().iter().map(|t| t.x.clone()).collect();
    let us: Vec<DVector<f64>> = traj.transitions().iter().map(|t| t.u.clone()).collect();
    let xps: Vec<DVector<f64>> = traj.transitions().iter().map(|t| t.x_plus.clone()).collect();
    let _ = writeln!(
        out,
        "traj split={split} id={} t={} x={} u={} x_plus={}",
        traj.id(),
        traj.transitions().len(),
        fmt_vec_rows(&xs),
        fmt_vec_rows(&us),
        fmt_vec_rows(&xps),
    );
}

pub fn render_dataset(family: Family, data: &GeneratedData) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "dataset version={DATASET_VERSION} family={} n_x={} n_u={} n={} seed={}",
        family.label(),
        data.train.n_x(),
        data.train.n_u(),
        data.train.trajectories().len(),
        data.seed,
    );
    match &data.system {
        SystemModel::Linear(sys) => {
            let _ = writeln!(
                out,
                "system kind=linear sigma_w={} a={} b={}",
                fmt_f64(sys.sigma_w),
                fmt_matrix(&sys.a),
                fmt_matrix(&sys.b),
            );
        }
        SystemModel::Arm { arm, sigma_w } => {
            let _ = writeln!(
                out,
                "system kind=arm sigma_w={} m1={} m2={} l1={} l2={} gravity={} damping={} dt={}",
                fmt_f64(*sigma_w),
                fmt_f64(arm.m1),
                fmt_f64(arm.m2),
                fmt_f64(arm.l1),
                fmt_f64(arm.l2),
                fmt_f64(arm.gravity),
                fmt_f64(arm.damping),
                fmt_f64(arm.dt),
            );
        }
    }
    for traj in data.train.trajectories() {
        write_traj(&mut out, "train", traj);
    }
    for traj in data.test.trajectories() {
        write_traj(&mut out, "test", traj);
    }
    out
}

pub fn write_dataset(path: &Path, family: Family, data: &GeneratedData) -> CliResult<()> {
    atomic_write(path, &render_dataset(family, data))
}

pub struct StoredDataset {
    pub family: Family,
    pub system: SystemModel,
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
}

impl StoredDataset {
    pub fn into_generated(self) -> GeneratedData {
        GeneratedData {
            system: self.system,
            train: self.train,
            test: self.test,
            seed: self.seed,
        }
    }
}

pub fn read_dataset(path: &Path) -> CliResult<StoredDataset> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();

    let (idx, first) = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?;
    let header = Record::parse(first, idx + 1)?;
    if header.tag != "dataset" {
        return Err(CliError::Data(format!(
            "{}: not a dataset file (starts with '{}')",
            path.display(),
            header.tag
        )));
    }
    header.expect_only(&["version", "family", "n_x", "n_u", "n", "seed"])?;
    let version: u32 = header.num("version")?;
    if version != DATASET_VERSION {
        return Err(CliError::Data(format!(
            "unsupported dataset version {version}"
        )));
    }
    let family: Family = header
        .get("family")?
        .parse()
        .map_err(|e: trajinf::Error| CliError::Data(e.to_string()))?;
    let n_x: usize = header.num("n_x")?;
    let n_u: usize = header.num("n_u")?;
    let n: usize = header.num("n")?;
    let seed: u64 = header.num("seed")?;
    if n_x == 0 || n_u == 0 {
        return Err(CliError::Data("state and input dimensions must be positive".into()));
    }

    let (idx, sys_line) = lines
        .next()
        .ok_or_else(|| CliError::Data("missing system record".into()))?;
    let sys = Record::parse(sys_line, idx + 1)?;
    if sys.tag != "system" {
        return Err(CliError::Data(format!(
            "line {}: expected system record, got '{}'",
            idx + 1,
            sys.tag
        )));
    }
    let system = match sys.get("kind")? {
        "linear" => {
            sys.expect_only(&["kind", "sigma_w", "a", "b"])?;
            let a = parse_matrix(sys.get("a")?, n_x, n_x, sys.line_no, "a")?;
            let b = parse_matrix(sys.get("b")?, n_x, n_u, sys.line_no, "b")?;
            let lin = LinearSystem::new(a, b, sys.f64("sigma_w")?, family.label())
                .map_err(|e| CliError::Data(format!("stored system invalid: {e}")))?;
            SystemModel::Linear(lin)
        }
        "arm" => {
            sys.expect_only(&["kind", "sigma_w", "m1", "m2", "l1", "l2", "gravity", "damping", "dt"])?;
            let arm = TwoLinkArm {
                m1: sys.f64("m1")?,
                m2: sys.f64("m2")?,
                l1: sys.f64("l1")?,
                l2: sys.f64("l2")?,
                gravity: sys.f64("gravity")?,
                damping: sys.f64("damping")?,
                dt: sys.f64("dt")?,
            };
            arm.validate()
                .map_err(|e| CliError::Data(format!("stored system invalid: {e}")))?;
            SystemModel::Arm {
                arm,
                sigma_w: sys.f64("sigma_w")?,
            }
        }
        other => {
            return Err(CliError::Data(format!(
                "line {}: unknown system kind '{other}'",
                sys.line_no
            )))
        }
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rec = Record::parse(line, idx + 1)?;
        if rec.tag != "traj" {
            return Err(CliError::Data(format!(
                "line {}: unexpected record '{}'",
                idx + 1,
                rec.tag
            )));
        }
        rec.expect_only(&["split", "id", "t", "x", "u", "x_plus"])?;
        let id: usize = rec.num("id")?;
        let t: usize = rec.num("t")?;
        if t == 0 {
            return Err(CliError::Data(format!(
                "line {}: trajectory {id} has no transitions",
                rec.line_no
            )));
        }
        let xs = parse_rows(rec.get("x")?, t, n_x, rec.line_no, "x")?;
        let us = parse_rows(rec.get("u")?, t, n_u, rec.line_no, "u")?;
        let xps = parse_rows(rec.get("x_plus")?, t, n_x, rec.line_no, "x_plus")?;
        let transitions: Vec<Transition> = xs
            .into_iter()
            .zip(us)
            .zip(xps)
            .map(|((x, u), xp)| Transition::new(x, u, xp))
            .collect();
        let traj = Trajectory::new(id, transitions)
            .map_err(|e| CliError::Data(format!("line {}: {e}", rec.line_no)))?;
        match rec.get("split")? {
            "train" => train.push(traj),
            "test" => test.push(traj),
            other => {
                return Err(CliError::Data(format!(
                    "line {}: unknown split '{other}'",
                    rec.line_no
                )))
            }
        }
    }

    if train.len() != n {
        return Err(CliError::Data(format!(
            "header says {n} training trajectories, file has {}",
            train.len()
        )));
    }
    let train = Dataset::new(n_x, n_u, train).map_err(CliError::from)?;
    let test = Dataset::single_allowed(n_x, n_u, test).map_err(CliError::from)?;
    Ok(StoredDataset {
        family,
        system,
        seed,
        train,
        test,
    })
}

// ---------------------------------------------------------------------------
// Influence report files

pub fn render_report(family: Family, report: &InfluenceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "report version={} family={}", report.version, family.label());
    let s = &report.summary;
    let _ = writeln!(
        out,
        "summary n_x={} n_u={} p={} n_traj={} n_test={} lambda={} pred_loss={} rho_cl={} j={}",
        s.n_x,
        s.n_u,
        s.p,
        s.n_traj,
        s.n_test,
        fmt_f64(s.lambda),
        fmt_f64(s.pred_loss),
        fmt_opt(s.rho_cl),
        fmt_opt(s.j),
    );
    let c = &report.counters;
    let _ = writeln!(
        out,
        "counters hessian_factorizations={} adjoint_lyap_solves={} forward_lyap_solves={} trace_assemblies={}",
        c.hessian_factorizations, c.adjoint_lyap_solves, c.forward_lyap_solves, c.trace_assemblies,
    );
    if let Some(reason) = &report.control_failure {
        let _ = writeln!(out, "control_failure text={}", reason.replace('\n', " "));
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning text={}", w.replace('\n', " "));
    }
    for r in &report.records {
        let _ = writeln!(
            out,
            "record traj_id={} if1={} if2={} exact_pred_delta={} grad_only_pred={} grad_only_j={} residual_norm={} delta_k={}",
            r.traj_id,
            fmt_f64(r.if1),
            fmt_opt(r.if2),
            fmt_f64(r.exact_pred_delta),
            fmt_f64(r.grad_only_pred),
            fmt_opt(r.grad_only_j),
            fmt_f64(r.residual_norm),
            fmt_f64(r.delta_k),
        );
    }
    out
}

pub fn write_report(path: &Path, family: Family, report: &InfluenceReport) -> CliResult<()> {
    atomic_write(path, &render_report(family, report))
}

/// Sidecar path for wall-clock data, kept out of the deterministic payload.
pub fn timings_path(report_path: &Path) -> PathBuf {
    let mut p = report_path.as_os_str().to_owned();
    p.push(".timings");
    PathBuf::from(p)
}

pub fn write_timings(report_path: &Path, t: &MethodTimings) -> CliResult<()> {
    let line = format!(
        "timings fit_s={} if1_s={} if2_s={} exact_loto_s={} baseline_s={} total_s={}\n",
        fmt_f64(t.fit_s),
        fmt_f64(t.if1_s),
        fmt_opt(t.if2_s),
        fmt_f64(t.exact_loto_s),
        fmt_f64(t.baseline_s),
        fmt_f64(t.total_s),
    );
    atomic_write(&timings_path(report_path), &line)
}

pub fn read_timings(report_path: &Path) -> CliResult<Option<MethodTimings>> {
    let path = timings_path(report_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = read_text(&path)?;
    let line = text
        .lines()
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty file", path.display())))?;
    let rec = Record::parse(line, 1)?;
    if rec.tag != "timings" {
        return Err(CliError::Data(format!("{}: not a timings file", path.display())));
    }
    Ok(Some(MethodTimings {
        fit_s: rec.f64("fit_s")?,
        if1_s: rec.f64("if1_s")?,
        if2_s: rec.opt_f64("if2_s")?,
        exact_loto_s: rec.f64("exact_loto_s")?,
        baseline_s: rec.f64("baseline_s")?,
        total_s: rec.f64("total_s")?,
    }))
}

pub fn read_report(path: &Path) -> CliResult<(Family, InfluenceReport)> {
    let text = read_text(path)?;
    let mut family: Option<Family> = None;
    let mut version = 0u32;
    let mut summary: Option<ModelSummary> = None;
    let mut counters: Option<CostCounters> = None;
    let mut control_failure: Option<String> = None;
    let mut warnings = Vec::new();
    let mut records = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        // Free-text records first: their payload is the rest of the line.
        if let Some(rest) = line.strip_prefix("control_failure text=") {
            control_failure = Some(rest.to_string());
            continue;
        }
        if let Some(rest) = line.strip_prefix("warning text=") {
            warnings.push(rest.to_string());
            continue;
        }
        let rec = Record::parse(line, line_no)?;
        match rec.tag {
            "report" => {
                version = rec.num("version")?;
                family = Some(
                    rec.get("family")?
                        .parse()
                        .map_err(|e: trajinf::Error| CliError::Data(e.to_string()))?,
                );
            }
            "summary" => {
                summary = Some(ModelSummary {
                    n_x: rec.num("n_x")?,
                    n_u: rec.num("n_u")?,
                    p: rec.num("p")?,
                    n_traj: rec.num("n_traj")?,
                    n_test: rec.num("n_test")?,
                    lambda: rec.f64("lambda")?,
                    pred_loss: rec.f64("pred_loss")?,
                    rho_cl: rec.opt_f64("rho_cl")?,
                    j: rec.opt_f64("j")?,
                });
            }
            "counters" => {
                counters = Some(CostCounters {
                    hessian_factorizations: rec.num("hessian_factorizations")?,
                    adjoint_lyap_solves: rec.num("adjoint_lyap_solves")?,
                    forward_lyap_solves: rec.num("forward_lyap_solves")?,
                    trace_assemblies: rec.num("trace_assemblies")?,
                });
            }
            "record" => {
                records.push(TrajectoryScores {
                    traj_id: rec.num("traj_id")?,
                    if1: rec.f64("if1")?,
                    if2: rec.opt_f64("if2")?,
                    exact_pred_delta: rec.f64("exact_pred_delta")?,
                    grad_only_pred: rec.f64("grad_only_pred")?,
                    grad_only_j: rec.opt_f64("grad_only_j")?,
                    residual_norm: rec.f64("residual_norm")?,
                    delta_k: rec.f64("delta_k")?,
                });
            }
            // Records added by future versions are skipped, not errors.
            _ => {}
        }
    }

    let family = family.ok_or_else(|| CliError::Data(format!("{}: not a report file", path.display())))?;
    let summary = summary.ok_or_else(|| CliError::Data("report has no summary record".into()))?;
    let counters = counters.ok_or_else(|| CliError::Data("report has no counters record".into()))?;
    if records.is_empty() {
        return Err(CliError::Data("report has no score records".into()));
    }
    let timings = read_timings(path)?.unwrap_or(MethodTimings {
        fit_s: 0.0,
        if1_s: 0.0,
        if2_s: None,
        exact_loto_s: 0.0,
        baseline_s: 0.0,
        total_s: 0.0,
    });
    Ok((
        family,
        InfluenceReport {
            version,
            summary,
            records,
            counters,
            warnings,
            control_failure,
            timings,
        },
    ))
}

// ---------------------------------------------------------------------------
// Ground-truth files

pub fn render_truth(family: Family, truth: &GroundTruth) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "truth version={TRUTH_VERSION} family={} base_pred={} base_j={} base_plant={} retrain_wall_s={} control_failures={} diverged_rollouts={}",
        family.label(),
        fmt_f64(truth.base_pred),
        fmt_opt(truth.base_j),
        fmt_opt(truth.base_plant),
        fmt_f64(truth.retrain_wall_s),
        truth.control_failures,
        truth.diverged_rollouts,
    );
    for r in &truth.records {
        let _ = writeln!(
            out,
            "delta traj_id={} delta_pred={} delta_j={} delta_plant={}",
            r.traj_id,
            fmt_opt(r.delta_pred),
            fmt_opt(r.delta_j),
            fmt_opt(r.delta_plant),
        );
    }
    out
}

pub fn write_truth(path: &Path, family: Family, truth: &GroundTruth) -> CliResult<()> {
    atomic_write(path, &render_truth(family, truth))
}

pub fn read_truth(path: &Path) -> CliResult<(Family, GroundTruth)> {
    let text = read_text(path)?;
    let mut family: Option<Family> = None;
    let mut header: Option<(f64, Option<f64>, Option<f64>, f64, usize, usize)> = None;
    let mut records = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = Record::parse(line, idx + 1)?;
        match rec.tag {
            "truth" => {
                let version: u32 = rec.num("version")?;
                if version != TRUTH_VERSION {
                    return Err(CliError::Data(format!(
                        "unsupported ground-truth version {version}"
                    )));
                }
                family = Some(
                    rec.get("family")?
                        .parse()
                        .map_err(|e: trajinf::Error| CliError::Data(e.to_string()))?,
                );
                header = Some((
                    rec.f64("base_pred")?,
                    rec.opt_f64("base_j")?,
                    rec.opt_f64("base_plant")?,
                    rec.f64("retrain_wall_s")?,
                    rec.num("control_failures")?,
                    rec.num("diverged_rollouts")?,
                ));
            }
            "delta" => {
                records.push(TruthRecord {
                    traj_id: rec.num("traj_id")?,
                    delta_pred: rec.opt_f64("delta_pred")?,
                    delta_j: rec.opt_f64("delta_j")?,
                    delta_plant: rec.opt_f64("delta_plant")?,
                });
            }
            _ => {}
        }
    }

    let family = family.ok_or_else(|| CliError::Data(format!("{}: not a ground-truth file", path.display())))?;
    let (base_pred, base_j, base_plant, retrain_wall_s, control_failures, diverged_rollouts) =
        header.unwrap();
    if records.is_empty() {
        return Err(CliError::Data("ground-truth file has no delta records".into()));
    }
    Ok((
        family,
        GroundTruth {
            records,
            retrain_wall_s,
            base_pred,
            base_j,
            base_plant,
            control_failures,
            diverged_rollouts,
        },
    ))
}

// ---------------------------------------------------------------------------
// Metric tables

fn csv_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub const METRICS_HEADER: &str = "system,target,method,pearson,spearman,mae,topk,time_s,speedup";

pub fn render_metrics_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.system,
            r.target.label(),
            r.method.label(),
            csv_opt(m.pearson),
            csv_opt(m.spearman),
            fmt_f64(m.mae),
            fmt_f64(m.topk_overlap),
            csv_opt(m.time_s),
            csv_opt(m.speedup),
        );
    }
    out
}

/// Console companion to the CSV: same grid, rounded for reading.
pub fn render_metrics_table(rows: &[EvalRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<10} {:<11} {:>8} {:>9} {:>12} {:>6} {:>9} {:>8}",
        "system", "target", "method", "pearson", "spearman", "mae", "topk", "time_s", "speedup"
    );
    let fmt_short = |v: Option<f64>| match v {
        Some(x) => format!("{x:.3}"),
        None => "-".to_string(),
    };
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<8} {:<10} {:<11} {:>8} {:>9} {:>12.3e} {:>6.2} {:>9} {:>8}",
            r.system,
            r.target.label(),
            r.method.label(),
            fmt_short(m.pearson),
            fmt_short(m.spearman),
            m.mae,
            m.topk_overlap,
            fmt_short(m.time_s),
            fmt_short(m.speedup),
        );
    }
    out
}

pub const ABLATION_HEADER: &str =
    "family,param,value,seed,target,method,pearson,spearman,mae,topk,time_s,speedup,error";

pub fn render_ablation_csv(rows: &[trajinf_bench::AblationRow]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        let (pearson, spearman, mae, topk, time_s, speedup) = match &r.metrics {
            Some(m) => (
                csv_opt(m.pearson),
                csv_opt(m.spearman),
                fmt_f64(m.mae),
                fmt_f64(m.topk_overlap),
                csv_opt(m.time_s),
                csv_opt(m.speedup),
            ),
            None => Default::default(),
        };
        let error = r.error.as_deref().unwrap_or("").replace(',', ";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.family, r.param, r.value, r.seed, r.target, r.method,
            pearson, spearman, mae, topk, time_s, speedup, error,
        );
    }
    out
}
