//! Flat `key = value` run configuration. Every key is schema-checked:
//! unknown or duplicate keys are rejected with their line number, values
//! are validated before any compute starts, and environment variables are
//! never consulted.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use trajinf::daresens::GradMethod;
use trajinf::lyapriccati::DareOptions;
use trajinf::pipeline::{HvpSolve, SolverOptions};
use trajinf_bench::{ExperimentConfig, Family};

use crate::errors::{CliError, CliResult};

/// Which knob an ablation run sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblateParam {
    NTraj,
    Lambda,
    RhoTarget,
    Mismatch,
}

impl AblateParam {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "n_traj" => Some(AblateParam::NTraj),
            "lambda" => Some(AblateParam::Lambda),
            "rho_target" => Some(AblateParam::RhoTarget),
            "mismatch" => Some(AblateParam::Mismatch),
            _ => None,
        }
    }
}

/// A sweep request: the parameter and its grid, kept as parsed numbers.
#[derive(Debug, Clone)]
pub struct AblateSpec {
    pub param: AblateParam,
    pub values: Vec<f64>,
}

/// Everything a command needs: the experiment description, solver choices,
/// and optional file-level defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub solver: SolverOptions,
    /// Default output path; the --out flag overrides it.
    pub out: Option<PathBuf>,
    pub ablate: Option<AblateSpec>,
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

struct Entry<'a> {
    line_no: usize,
    key: &'a str,
    value: &'a str,
}

fn split_entries(text: &str) -> CliResult<Vec<Entry<'_>>> {
    let mut entries = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Config(format!(
                "line {line_no}: expected 'key = value', got '{line}'"
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() {
            return Err(CliError::Config(format!("line {line_no}: empty key")));
        }
        if !seen.insert(key) {
            return Err(CliError::Config(format!(
                "line {line_no}: duplicate key '{key}'"
            )));
        }
        entries.push(Entry {
            line_no,
            key,
            value,
        });
    }
    Ok(entries)
}

fn bad(line_no: usize, key: &str, detail: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("line {line_no}: key '{key}': {detail}"))
}

fn parse_num<T: std::str::FromStr>(e: &Entry, what: &str) -> CliResult<T> {
    e.value
        .parse::<T>()
        .map_err(|_| bad(e.line_no, e.key, format!("expected {what}, got '{}'", e.value)))
}

fn parse_bool(e: &Entry) -> CliResult<bool> {
    match e.value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(bad(e.line_no, e.key, format!("expected true|false, got '{other}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(e: &Entry, what: &str) -> CliResult<Vec<T>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| bad(e.line_no, e.key, format!("expected comma-separated {what}, got '{s}'")))
        })
        .collect()
}

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let entries = split_entries(text)?;

    // The family picks the defaults every other key perturbs, so resolve
    // it before walking the rest.
    let family_entry = entries
        .iter()
        .find(|e| e.key == "family")
        .ok_or_else(|| CliError::Config("missing required key 'family'".into()))?;
    let family: Family = family_entry
        .value
        .parse()
        .map_err(|_| bad(family_entry.line_no, "family", format!("expected S1|S2|S3|S4, got '{}'", family_entry.value)))?;

    let mut experiment = ExperimentConfig::defaults(family);
    let mut hvp_cg = false;
    let mut cg_tol = 1e-12f64;
    let mut cg_max_iter = 1000usize;
    let mut grad = GradMethod::Adjoint;
    let mut dare = DareOptions::default();
    let mut out: Option<PathBuf> = None;
    let mut ablate_param: Option<AblateParam> = None;
    let mut ablate_values: Option<Vec<f64>> = None;

    for e in &entries {
        match e.key {
            "family" => {}
            "n_traj" => experiment.n_traj = parse_num(e, "a positive integer")?,
            "t_len" => experiment.t_len = parse_num(e, "a positive integer")?,
            "sigma_w" => experiment.sigma_w = parse_num(e, "a number")?,
            "lambda" => experiment.lambda = parse_num(e, "a number")?,
            "q_diag" => experiment.q_diag = parse_num(e, "a number")?,
            "r_diag" => experiment.r_diag = parse_num(e, "a number")?,
            "sigma0_diag" => experiment.sigma0_diag = parse_num(e, "a number")?,
            "seeds" => experiment.seeds = parse_list(e, "integers")?,
            "u_std" => experiment.excitation.u_std = parse_num(e, "a number")?,
            "x0_std" => experiment.excitation.x0_std = parse_num(e, "a number")?,
            "mismatch" => experiment.mismatch_strength = parse_num(e, "a number")?,
            "s3_states" => experiment.s3_states = parse_num(e, "8 or 10")?,
            "rho_target" => experiment.rho_target = parse_num(e, "a number")?,
            "plant_truth" => experiment.plant_truth = parse_bool(e)?,
            "plant_horizon" => experiment.plant.horizon = parse_num(e, "a positive integer")?,
            "plant_rollouts" => experiment.plant.n_rollouts = parse_num(e, "a positive integer")?,
            "hvp" => match e.value {
                "direct" => hvp_cg = false,
                "cg" => hvp_cg = true,
                other => return Err(bad(e.line_no, e.key, format!("expected direct|cg, got '{other}'"))),
            },
            "cg_tol" => cg_tol = parse_num(e, "a number")?,
            "cg_max_iter" => cg_max_iter = parse_num(e, "a positive integer")?,
            "grad" => match e.value {
                "adjoint" => grad = GradMethod::Adjoint,
                "forward" => grad = GradMethod::Forward,
                other => return Err(bad(e.line_no, e.key, format!("expected adjoint|forward, got '{other}'"))),
            },
            "dare_tol_abs" => dare.tol_abs = parse_num(e, "a number")?,
            "dare_tol_rel" => dare.tol_rel = parse_num(e, "a number")?,
            "dare_max_newton" => dare.max_newton = parse_num(e, "a positive integer")?,
            "out" => out = Some(PathBuf::from(e.value)),
            "ablate_param" => {
                ablate_param = Some(AblateParam::parse(e.value).ok_or_else(|| {
                    bad(e.line_no, e.key, format!("expected n_traj|lambda|rho_target|mismatch, got '{}'", e.value))
                })?)
            }
            "ablate_values" => ablate_values = Some(parse_list(e, "numbers")?),
            unknown => {
                return Err(CliError::Config(format!(
                    "line {}: unknown key '{unknown}'",
                    e.line_no
                )))
            }
        }
    }

    experiment.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if !(cg_tol > 0.0 && cg_tol.is_finite()) {
        return Err(CliError::Config("cg_tol must be positive and finite".into()));
    }
    if cg_max_iter == 0 {
        return Err(CliError::Config("cg_max_iter must be positive".into()));
    }
    if !(dare.tol_abs > 0.0 && dare.tol_rel > 0.0) || dare.max_newton == 0 {
        return Err(CliError::Config("DARE tolerances must be positive".into()));
    }

    let ablate = match (ablate_param, ablate_values) {
        (Some(param), Some(values)) => {
            if values.is_empty() {
                return Err(CliError::Config("ablate_values must be non-empty".into()));
            }
            if param == AblateParam::NTraj
                && values.iter().any(|v| v.fract() != 0.0 || *v < 2.0)
            {
                return Err(CliError::Config(
                    "ablate_values for n_traj must be integers >= 2".into(),
                ));
            }
            Some(AblateSpec { param, values })
        }
        (None, None) => None,
        _ => {
            return Err(CliError::Config(
                "ablate_param and ablate_values must be given together".into(),
            ))
        }
    };

    let solver = SolverOptions {
        hvp: if hvp_cg {
            HvpSolve::Cg {
                tol: cg_tol,
                max_iter: cg_max_iter,
            }
        } else {
            HvpSolve::Direct
        },
        grad,
        dare,
    };

    Ok(RunConfig {
        experiment,
        solver,
        out,
        ablate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_inherits_family_defaults() {
        let cfg = parse_config("family = S1\n").unwrap();
        assert_eq!(cfg.experiment.family, Family::S1);
        assert_eq!(cfg.experiment.n_traj, 30);
        assert_eq!(cfg.experiment.t_len, 25);
        assert_eq!(cfg.experiment.lambda, 1e-5);
        assert!(matches!(cfg.solver.hvp, HvpSolve::Direct));
        assert!(matches!(cfg.solver.grad, GradMethod::Adjoint));
        assert!(cfg.ablate.is_none());
    }

    #[test]
    fn overrides_comments_and_spacing_are_accepted() {
        let text = "\n# experiment\nfamily = S2\nn_traj=10   # short run\n\nlambda = 1e-3\nhvp = cg\ncg_tol = 1e-9\nseeds = 3, 4, 5\nplant_truth = true\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.experiment.n_traj, 10);
        assert_eq!(cfg.experiment.lambda, 1e-3);
        assert_eq!(cfg.experiment.seeds, vec![3, 4, 5]);
        assert!(cfg.experiment.plant_truth);
        assert!(matches!(cfg.solver.hvp, HvpSolve::Cg { tol, .. } if tol == 1e-9));
    }

    #[test]
    fn unknown_key_is_rejected_with_its_line() {
        let err = parse_config("family = S1\nn_trajs = 10\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("n_trajs"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn duplicate_and_malformed_keys_are_rejected() {
        assert!(parse_config("family = S1\nfamily = S2\n")
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
        assert!(parse_config("family S1\n").unwrap_err().to_string().contains("key = value"));
        assert!(parse_config("n_traj = 5\n")
            .unwrap_err()
            .to_string()
            .contains("family"));
    }

    #[test]
    fn invalid_values_fail_validation() {
        // Parsing succeeds but the assembled experiment is rejected.
        assert_eq!(
            parse_config("family = S1\nn_traj = 0\n").unwrap_err().exit_code(),
            2
        );
        assert_eq!(
            parse_config("family = S1\nlambda = bogus\n").unwrap_err().exit_code(),
            2
        );
        assert_eq!(
            parse_config("family = S3\ns3_states = 9\n").unwrap_err().exit_code(),
            2
        );
    }

    #[test]
    fn ablate_keys_must_come_in_pairs() {
        assert!(parse_config("family = S1\nablate_param = lambda\n").is_err());
        let cfg =
            parse_config("family = S1\nablate_param = lambda\nablate_values = 1e-7,1e-5,1e-3\n")
                .unwrap();
        let spec = cfg.ablate.unwrap();
        assert_eq!(spec.param, AblateParam::Lambda);
        assert_eq!(spec.values.len(), 3);
        assert!(parse_config("family = S1\nablate_param = n_traj\nablate_values = 2.5\n").is_err());
    }
}
