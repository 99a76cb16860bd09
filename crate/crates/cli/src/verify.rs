//! The `verify-brackets` command.

use std::path::{Path, PathBuf};

use qmoments::brackets::{bracket_axiom_suite, AxiomConfig, AxiomReport, BracketKind};

use crate::failure::Failure;

/// Largest axiom defect accepted with exact polynomial partials.
pub const ANALYTIC_TOLERANCE: f64 = 1e-10;
/// Largest axiom defect accepted with central-difference partials.
pub const DIFFERENCE_TOLERANCE: f64 = 1e-6;
pub const DIFFERENCE_STEP: f64 = 1e-5;

pub fn tolerance(report: &AxiomReport) -> f64 {
    if report.fd_step.is_some() {
        DIFFERENCE_TOLERANCE
    } else {
        ANALYTIC_TOLERANCE
    }
}

/// Antisymmetry, Leibniz and Jacobi under the tolerance for the mode. The
/// Casimir column is informational for differenced partials.
pub fn report_passes(report: &AxiomReport) -> bool {
    let tol = tolerance(report);
    let core = report.antisymmetry.max(report.leibniz).max(report.jacobi);
    let casimir_ok = report.fd_step.is_some() || report.casimir.unwrap_or(0.0) < tol;
    core < tol && casimir_ok
}

/// All three brackets, analytic then differenced.
pub fn run_suites(samples: usize, seed: u64) -> Result<Vec<AxiomReport>, Failure> {
    let mut out = Vec::new();
    for kind in [BracketKind::Canonical, BracketKind::Moment, BracketKind::Covariance] {
        for fd in [None, Some(DIFFERENCE_STEP)] {
            let mut cfg = AxiomConfig::new(kind, samples, seed);
            cfg.fd_step = fd;
            out.push(bracket_axiom_suite(&cfg).map_err(|e| Failure::validation(e.to_string()))?);
        }
    }
    Ok(out)
}

pub fn write_reports(dir: &Path, reports: &[AxiomReport]) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(dir)?;
    let mut text = format!("{},passed\n", AxiomReport::csv_header());
    for r in reports {
        text.push_str(&format!("{},{}\n", r.csv_row(), report_passes(r)));
    }
    let path = dir.join("brackets.csv");
    std::fs::write(&path, text)?;
    Ok(path)
}
