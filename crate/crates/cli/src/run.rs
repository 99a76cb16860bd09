//! The `run` command: one scenario, one model.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use qmoments::brackets::{MomentCasimir, MomentCasimirDet};
use qmoments::dynamics::{ClosureSpec, MomentModel};
use qmoments::functional::Observable;
use qmoments::integrate::{integrate, IntegrateError, Monitor, TrajectoryRecord};
use qmoments::model::PhaseVector;
use qmoments::potential::PotentialKind;
use qmoments::wigner::{
    evolve_comoving, evolve_lab, gaussian_init, Axis, Coherent, ComovingFlow, ComovingHamiltonian, ComovingState,
    Frame, GridRun, StepHamiltonian, Translated, WignerGrid, GRID_COLUMNS,
};

use crate::config::{Config, ModelKind, SnapshotFormat};
use crate::failure::Failure;
use crate::plot;

/// Monitors recorded for moment models.
pub const MOMENT_MONITORS: [&str; 3] = ["energy", "casimir_1", "casimir_det"];

/// A finished simulation before anything is written.
pub struct Simulation {
    pub record: TrajectoryRecord,
    pub columns: Vec<String>,
    pub monitors: Vec<&'static str>,
    /// Column names of the mean position and momentum, for the orbit plot.
    pub orbit: (String, String),
    /// Initial and final grid for Wigner models.
    pub grids: Option<(WignerGrid, WignerGrid)>,
}

/// Paths and headline numbers of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub trajectory: PathBuf,
    pub plots: Vec<PathBuf>,
    pub snapshots: Vec<PathBuf>,
    pub steps: usize,
    pub final_time: f64,
    pub drifts: Vec<(String, f64)>,
}

pub fn moment_model(cfg: &Config, kind: ModelKind) -> Result<MomentModel, Failure> {
    let spec =
        || ClosureSpec::new(cfg.potential.clone(), cfg.closure_order).map_err(|e| Failure::validation(e.to_string()));
    Ok(match kind {
        ModelKind::MomentXz => MomentModel::MomentXz(spec()?),
        ModelKind::MomentSigma => MomentModel::MomentSigma(spec()?),
        ModelKind::FourthOrderConservative => {
            MomentModel::FourthOrder { potential: cfg.potential.clone(), conservative: true }
        }
        ModelKind::FourthOrderNonconservative => {
            MomentModel::FourthOrder { potential: cfg.potential.clone(), conservative: false }
        }
        ModelKind::WignerComoving | ModelKind::WignerLab => {
            return Err(Failure::validation(format!("`{}` is not a moment model", kind.name())))
        }
    })
}

fn aborted(e: IntegrateError) -> Failure {
    Failure::runtime(format!("{} (after {} accepted steps)", e.reason, e.partial.times.len()))
}

pub fn simulate_moments(cfg: &Config, model: &MomentModel) -> Result<Simulation, Failure> {
    let y0 =
        model.initial_state(&cfg.mean, &cfg.physical_covariance()).map_err(|e| Failure::validation(e.to_string()))?;
    let dim = cfg.mean.len();
    let in_moments = |y: &[f64]| {
        let (z, sigma) = model.mean_and_covariance(y);
        let x = (&sigma + &z * z.transpose()) * 0.5;
        (z, x)
    };
    let monitors = [
        Monitor::new("energy", |_, y: &[f64]| model.energy(y).unwrap_or(f64::NAN)),
        Monitor::new("casimir_1", |_, y: &[f64]| {
            let (z, x) = in_moments(y);
            MomentCasimir::new(1).value(&z, &x)
        }),
        Monitor::new("casimir_det", |_, y: &[f64]| {
            let (z, x) = in_moments(y);
            MomentCasimirDet.value(&z, &x)
        }),
    ];
    let mut rhs = |_t: f64, y: &[f64], out: &mut [f64]| model.rhs(y, out);
    let record = integrate(&mut rhs, &y0, &cfg.stepper, &monitors).map_err(aborted)?;
    let columns = model.column_names(dim);
    let orbit = (columns[0].clone(), columns[dim / 2].clone());
    Ok(Simulation { record, columns, monitors: MOMENT_MONITORS.to_vec(), orbit, grids: None })
}

fn half_widths(cfg: &Config) -> (f64, f64) {
    let phys = cfg.physical_covariance();
    (
        cfg.grid.q_half_width.unwrap_or(cfg.grid.width * phys[(0, 0)].sqrt()),
        cfg.grid.p_half_width.unwrap_or(cfg.grid.width * phys[(1, 1)].sqrt()),
    )
}

/// The grid Hamiltonian the config asks for.
pub fn grid_hamiltonian(cfg: &Config) -> Result<Box<dyn ComovingHamiltonian>, Failure> {
    if let PotentialKind::Step { height } = *cfg.potential.kind() {
        return Ok(Box::new(StepHamiltonian { height }));
    }
    if cfg.grid.linearized {
        return Ok(Box::new(Coherent { potential: cfg.potential.clone() }));
    }
    Ok(Box::new(Translated::new(cfg.potential.clone()).map_err(|e| Failure::validation(e.to_string()))?))
}

fn flow_for(cfg: &Config, grid: &WignerGrid) -> Result<ComovingFlow, Failure> {
    let flow = ComovingFlow::new(grid, cfg.grid.order)
        .and_then(|f| f.with_boundary(cfg.grid.boundary, grid))
        .map_err(|e| Failure::validation(format!("grid: {e}")))?;
    Ok(flow.with_boundary_limit(cfg.grid.boundary_limit))
}

/// Initial co-moving state: `W̃` centred on the origin, frame at the mean.
pub fn comoving_initial(cfg: &Config) -> Result<ComovingState, Failure> {
    let (qh, ph) = half_widths(cfg);
    let bad = |e: qmoments::Error| Failure::validation(format!("initial grid: {e}"));
    let q = Axis::centred(0.0, qh, cfg.grid.points).map_err(bad)?;
    let p = Axis::centred(0.0, ph, cfg.grid.points).map_err(bad)?;
    let grid = gaussian_init(&PhaseVector::zeros(1), &cfg.covariance, q, p, Frame::Comoving).map_err(bad)?;
    let z = PhaseVector::new(cfg.mean.clone()).map_err(bad)?;
    ComovingState::new(grid, z, cfg.stepper.t0).map_err(bad)
}

fn lab_initial(cfg: &Config) -> Result<WignerGrid, Failure> {
    let (qh, ph) = half_widths(cfg);
    let bad = |e: qmoments::Error| Failure::validation(format!("initial grid: {e}"));
    let q = Axis::centred(cfg.mean[0], qh, cfg.grid.points).map_err(bad)?;
    let p = Axis::centred(cfg.mean[1], ph, cfg.grid.points).map_err(bad)?;
    let z = PhaseVector::new(cfg.mean.clone()).map_err(bad)?;
    gaussian_init(&z, &cfg.covariance, q, p, Frame::Lab).map_err(bad)
}

pub fn simulate_comoving(cfg: &Config) -> Result<Simulation, Failure> {
    let state = comoving_initial(cfg)?;
    let h = grid_hamiltonian(cfg)?;
    let flow = flow_for(cfg, &state.grid)?;
    // surface guard failures (e.g. the wall outside the grid) before stepping
    flow.rhs(h.as_ref(), state.origin(), &state.grid)
        .map_err(|e| Failure::runtime(format!("boundary check at t = {}: {e}", state.t)))?;
    let run = evolve_comoving(&flow, h.as_ref(), &state, &cfg.stepper).map_err(aborted)?;
    Ok(grid_simulation(run, state.grid, vec!["energy", "pinning"]))
}

pub fn simulate_lab(cfg: &Config) -> Result<Simulation, Failure> {
    let grid = lab_initial(cfg)?;
    let h = grid_hamiltonian(cfg)?;
    let flow = flow_for(cfg, &grid)?;
    flow.lab_rhs(h.as_ref(), &grid)
        .map_err(|e| Failure::runtime(format!("boundary check at t = {}: {e}", cfg.stepper.t0)))?;
    let run = evolve_lab(&flow, h.as_ref(), &grid, &cfg.stepper).map_err(aborted)?;
    Ok(grid_simulation(run, grid, vec!["energy"]))
}

fn grid_simulation(run: GridRun, initial: WignerGrid, monitors: Vec<&'static str>) -> Simulation {
    Simulation {
        record: run.record,
        columns: GRID_COLUMNS.iter().map(|s| s.to_string()).collect(),
        monitors,
        orbit: ("mean_q".into(), "mean_p".into()),
        grids: Some((initial, run.final_grid)),
    }
}

pub fn simulate(cfg: &Config) -> Result<Simulation, Failure> {
    match cfg.model {
        ModelKind::WignerComoving => simulate_comoving(cfg),
        ModelKind::WignerLab => simulate_lab(cfg),
        kind => simulate_moments(cfg, &moment_model(cfg, kind)?),
    }
}

pub fn write_record(path: &Path, record: &TrajectoryRecord, columns: &[String]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    record.write_csv(&mut out, columns)?;
    std::io::Write::flush(&mut out)?;
    Ok(())
}

fn write_grid(path: &Path, grid: &WignerGrid, format: SnapshotFormat) -> Result<(), Failure> {
    let mut out = BufWriter::new(File::create(path)?);
    match format {
        SnapshotFormat::Csv => grid.write_csv(&mut out)?,
        SnapshotFormat::Binary => grid.write_binary(&mut out)?,
        SnapshotFormat::None => {}
    }
    std::io::Write::flush(&mut out)?;
    Ok(())
}

/// Writes the trajectory CSV, the SVG plots drawn from it, and any grid
/// snapshots. `name` is the file suffix of the trajectory.
pub fn write_outputs(cfg: &Config, sim: &Simulation, name: &str) -> Result<RunSummary, Failure> {
    let trajectory = cfg.output.path(&format!("{name}.csv"));
    write_record(&trajectory, &sim.record, &sim.columns)?;
    let plots = if cfg.output.svg {
        plot::plots_from_csv(&trajectory, &sim.monitors, &sim.orbit.0, &sim.orbit.1)?
    } else {
        vec![]
    };
    let mut snapshots = vec![];
    if let (Some((first, last)), fmt) = (&sim.grids, cfg.output.snapshots) {
        let ext = match fmt {
            SnapshotFormat::None => None,
            SnapshotFormat::Csv => Some("csv"),
            SnapshotFormat::Binary => Some("bin"),
        };
        if let Some(ext) = ext {
            for (tag, g) in [("initial", first), ("final", last)] {
                let path = cfg.output.path(&format!("grid_{tag}.{ext}"));
                write_grid(&path, g, fmt)?;
                snapshots.push(path);
            }
        }
    }
    let drifts = sim
        .monitors
        .iter()
        .filter(|m| **m != "pinning")
        .filter_map(|m| sim.record.max_relative_drift(m, 1e-300).map(|d| (m.to_string(), d)))
        .collect();
    Ok(RunSummary {
        trajectory,
        plots,
        snapshots,
        steps: sim.record.times.len().saturating_sub(1),
        final_time: sim.record.final_time(),
        drifts,
    })
}

pub fn run(cfg: &Config) -> Result<RunSummary, Failure> {
    let sim = simulate(cfg)?;
    write_outputs(cfg, &sim, "trajectory")
}
