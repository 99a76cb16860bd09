//! The `compare-closures` command: both fourth-order systems from the same
//! initial data and stepper.

use std::fmt::Write as _;

use crate::config::{Config, ModelKind};
use crate::failure::Failure;
use crate::run::{moment_model, simulate_moments, write_outputs, Simulation};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub conservative_drift: f64,
    pub nonconservative_drift: f64,
    /// Largest state difference when both runs accepted the same steps.
    pub max_state_difference: Option<f64>,
    pub conservative_steps: usize,
    pub nonconservative_steps: usize,
}

impl Comparison {
    pub fn ratio(&self) -> f64 {
        self.nonconservative_drift / self.conservative_drift
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("quantity,value\n");
        let diff = self.max_state_difference.map_or("NA".to_string(), |d| format!("{d:.6e}"));
        let _ = writeln!(s, "conservative_energy_drift,{:.6e}", self.conservative_drift);
        let _ = writeln!(s, "nonconservative_energy_drift,{:.6e}", self.nonconservative_drift);
        let _ = writeln!(s, "drift_ratio,{:.6e}", self.ratio());
        let _ = writeln!(s, "max_state_difference,{diff}");
        let _ = writeln!(s, "conservative_steps,{}", self.conservative_steps);
        let _ = writeln!(s, "nonconservative_steps,{}", self.nonconservative_steps);
        s
    }
}

fn state_difference(a: &Simulation, b: &Simulation) -> Option<f64> {
    if a.record.times != b.record.times {
        return None;
    }
    Some(
        a.record
            .states
            .iter()
            .zip(&b.record.states)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max),
    )
}

/// Runs the two models (concurrently) without writing anything.
pub fn simulate_pair(cfg: &Config) -> Result<(Simulation, Simulation, Comparison), Failure> {
    let good = moment_model(cfg, ModelKind::FourthOrderConservative)?;
    let bad = moment_model(cfg, ModelKind::FourthOrderNonconservative)?;
    let (a, b) = std::thread::scope(|s| {
        let other = s.spawn(|| simulate_moments(cfg, &bad));
        let mine = simulate_moments(cfg, &good);
        (mine, other.join().expect("comparison thread panicked"))
    });
    let (a, b) = (a?, b?);
    let drift = |s: &Simulation| s.record.max_relative_drift("energy", 1e-300).unwrap_or(f64::NAN);
    let cmp = Comparison {
        conservative_drift: drift(&a),
        nonconservative_drift: drift(&b),
        max_state_difference: state_difference(&a, &b),
        conservative_steps: a.record.times.len() - 1,
        nonconservative_steps: b.record.times.len() - 1,
    };
    Ok((a, b, cmp))
}

pub fn compare_closures(cfg: &Config) -> Result<Comparison, Failure> {
    let (a, b, cmp) = simulate_pair(cfg)?;
    write_outputs(cfg, &a, "conservative")?;
    write_outputs(cfg, &b, "nonconservative")?;
    std::fs::write(cfg.output.path("comparison.csv"), cmp.csv())?;
    Ok(cmp)
}
