//! JSON scenario files.
//!
//! Parsing is strict: unknown keys are rejected by serde, and every
//! missing or inconsistent field is collected before reporting.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use qmoments::integrate::{Method, StepperConfig};
use qmoments::model::{uncertainty_admissible, Covariance};
use qmoments::potential::{Potential, TabulatedPotential};
use qmoments::wigner::{Boundary, MoyalOrder};

use crate::failure::Failure;

/// Environment variable that overrides `output.dir`.
pub const OUT_DIR_ENV: &str = "QMOMENTS_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Harmonic,
    Quartic,
    Morse,
    Step,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MomentXz,
    MomentSigma,
    FourthOrderConservative,
    FourthOrderNonconservative,
    WignerComoving,
    WignerLab,
}

impl ModelKind {
    pub fn is_wigner(self) -> bool {
        matches!(self, Self::WignerComoving | Self::WignerLab)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::MomentXz => "moment_xz",
            Self::MomentSigma => "moment_sigma",
            Self::FourthOrderConservative => "fourth_order_conservative",
            Self::FourthOrderNonconservative => "fourth_order_nonconservative",
            Self::WignerComoving => "wigner_comoving",
            Self::WignerLab => "wigner_lab",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPotential {
    pub k: Option<f64>,
    pub lambda: Option<f64>,
    pub depth: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
    /// `V(q) = Σ c_i qⁱ`, lowest power first.
    pub coefficients: Option<Vec<f64>>,
    pub table: Option<RawTable>,
    pub derivative_order: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTable {
    pub q_min: f64,
    pub q_max: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInitial {
    pub mean: Option<Vec<f64>>,
    /// Dimensionless: the physical covariance is `ħ·sigma`.
    pub sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStepper {
    pub method: Option<String>,
    pub dt: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub t0: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub points: Option<usize>,
    /// Half-width of each axis in standard deviations of the initial state.
    pub width: Option<f64>,
    pub q_half_width: Option<f64>,
    pub p_half_width: Option<f64>,
    pub moyal: Option<String>,
    pub boundary: Option<String>,
    pub boundary_limit: Option<f64>,
    /// Replace `H̃` by its linearisation about the mean (coherent transport).
    pub linearized: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub prefix: Option<String>,
    pub svg: Option<bool>,
    /// `none`, `csv` or `binary`: initial and final grids.
    pub grid_snapshots: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub scenario: Option<ScenarioKind>,
    pub model: Option<ModelKind>,
    pub potential: Option<RawPotential>,
    pub closure_order: Option<usize>,
    pub hbar: Option<f64>,
    pub initial: Option<RawInitial>,
    pub check_admissibility: Option<bool>,
    pub stepper: Option<RawStepper>,
    pub grid: Option<RawGrid>,
    pub output: Option<RawOutput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotFormat {
    None,
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub points: usize,
    pub width: f64,
    pub q_half_width: Option<f64>,
    pub p_half_width: Option<f64>,
    pub order: MoyalOrder,
    pub boundary: Boundary,
    pub boundary_limit: f64,
    pub linearized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub prefix: String,
    pub svg: bool,
    pub snapshots: SnapshotFormat,
}

impl OutputSettings {
    pub fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.prefix))
    }
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Config {
    pub scenario: ScenarioKind,
    pub model: ModelKind,
    pub potential: Potential,
    pub closure_order: usize,
    pub hbar: f64,
    pub mean: DVector<f64>,
    pub covariance: Covariance,
    pub stepper: StepperConfig,
    pub grid: GridSettings,
    pub output: OutputSettings,
}

impl Config {
    pub fn physical_covariance(&self) -> DMatrix<f64> {
        self.covariance.physical()
    }
}

/// Every problem found in a config, reported together.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Problems(pub Vec<String>);

impl Problems {
    fn missing(&mut self, field: &str) {
        self.0.push(format!("missing required field `{field}`"));
    }

    fn bad(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }
}

impl fmt::Display for Problems {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {p}")?;
        }
        Ok(())
    }
}

/// What the config will be used for; each command checks different things.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Run,
    /// Both fourth-order models; `model` is ignored.
    Compare,
    /// Grid against moment flow; `model` is ignored.
    CrossValidate,
}

pub fn load(path: &Path, purpose: Purpose) -> Result<Config, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    parse_for(&text, purpose)
}

pub fn parse(text: &str) -> Result<Config, Failure> {
    parse_for(text, Purpose::Run)
}

pub fn parse_for(text: &str, purpose: Purpose) -> Result<Config, Failure> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Failure::validation(format!("config does not parse: {e}")))?;
    validate(raw, purpose)
}

fn potential_for(kind: ScenarioKind, raw: &RawPotential, problems: &mut Problems) -> Option<Potential> {
    let mut need = |v: Option<f64>, name: &str| {
        if v.is_none() {
            problems.missing(&format!("potential.{name}"));
        }
        v
    };
    let pot = match kind {
        ScenarioKind::Harmonic => Some(Potential::harmonic(need(raw.k, "k")?)),
        ScenarioKind::Quartic => Some(Potential::quartic(need(raw.lambda, "lambda")?)),
        ScenarioKind::Morse => {
            let (d, a) = (need(raw.depth, "depth"), need(raw.width, "width"));
            Some(Potential::morse(d?, a?))
        }
        ScenarioKind::Step => Some(Potential::step(need(raw.height, "height")?)),
        ScenarioKind::Custom => match (&raw.coefficients, &raw.table) {
            (Some(c), None) if !c.is_empty() => Some(Potential::polynomial(c.clone())),
            (None, Some(t)) => match TabulatedPotential::new(t.q_min, t.q_max, &t.values) {
                Ok(table) => Some(Potential::tabulated(table)),
                Err(e) => {
                    problems.bad(format!("potential.table: {e}"));
                    None
                }
            },
            (Some(_), Some(_)) => {
                problems.bad("potential: give either `coefficients` or `table`, not both");
                None
            }
            _ => {
                problems.missing("potential.coefficients (or potential.table)");
                None
            }
        },
    }?;
    Some(match raw.derivative_order {
        Some(n) => pot.with_derivative_order(n),
        None => pot,
    })
}

fn matrix_from_rows(rows: &[Vec<f64>], dim: usize, problems: &mut Problems) -> Option<DMatrix<f64>> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        problems.bad(format!("initial.sigma must be {dim}×{dim} to match initial.mean"));
        return None;
    }
    Some(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
}

fn stepper_from(raw: &RawStepper, problems: &mut Problems) -> Option<StepperConfig> {
    let horizon = raw.horizon;
    if horizon.is_none() {
        problems.missing("stepper.horizon");
    }
    let method = match raw.method.as_deref() {
        Some("rk4") => {
            if raw.dt.is_none() {
                problems.missing("stepper.dt");
            }
            Method::Rk4 { dt: raw.dt? }
        }
        Some("adaptive") => {
            if raw.rtol.is_none() {
                problems.missing("stepper.rtol");
            }
            let rtol = raw.rtol?;
            Method::Adaptive {
                rtol,
                atol: raw.atol.unwrap_or(rtol),
                dt_min: raw.dt_min.unwrap_or(1e-12),
                dt_max: raw.dt_max.unwrap_or(f64::INFINITY),
            }
        }
        Some(other) => {
            problems.bad(format!("stepper.method must be `rk4` or `adaptive`, got `{other}`"));
            return None;
        }
        None => {
            problems.missing("stepper.method");
            return None;
        }
    };
    let cfg = StepperConfig { method, t0: raw.t0.unwrap_or(0.0), horizon: horizon? };
    if let Err(e) = cfg.validate() {
        problems.bad(format!("stepper: {e}"));
        return None;
    }
    Some(cfg)
}

fn grid_from(raw: &RawGrid, scenario: ScenarioKind, problems: &mut Problems) -> GridSettings {
    let default_order = if scenario == ScenarioKind::Step { MoyalOrder::Classical } else { MoyalOrder::Hbar2 };
    let order = match raw.moyal.as_deref() {
        None => default_order,
        Some("classical") => MoyalOrder::Classical,
        Some("hbar2") => MoyalOrder::Hbar2,
        Some(other) => {
            problems.bad(format!("grid.moyal must be `classical` or `hbar2`, got `{other}`"));
            default_order
        }
    };
    let boundary = match raw.boundary.as_deref() {
        None | Some("zero_extension") => Boundary::ZeroExtension,
        Some("one_sided") => Boundary::OneSided,
        Some(other) => {
            problems.bad(format!("grid.boundary must be `zero_extension` or `one_sided`, got `{other}`"));
            Boundary::ZeroExtension
        }
    };
    let points = raw.points.unwrap_or(129);
    if points < 7 {
        problems.bad("grid.points must be at least 7");
    }
    for (name, v) in [("width", raw.width), ("q_half_width", raw.q_half_width), ("p_half_width", raw.p_half_width)] {
        if matches!(v, Some(x) if !(x > 0.0 && x.is_finite())) {
            problems.bad(format!("grid.{name} must be positive"));
        }
    }
    GridSettings {
        points,
        width: raw.width.unwrap_or(8.0),
        q_half_width: raw.q_half_width,
        p_half_width: raw.p_half_width,
        order,
        boundary,
        boundary_limit: raw.boundary_limit.unwrap_or(qmoments::wigner::DEFAULT_BOUNDARY_LIMIT),
        linearized: raw.linearized.unwrap_or(false),
    }
}

fn output_from(raw: &RawOutput, problems: &mut Problems) -> OutputSettings {
    let snapshots = match raw.grid_snapshots.as_deref() {
        None | Some("none") => SnapshotFormat::None,
        Some("csv") => SnapshotFormat::Csv,
        Some("binary") => SnapshotFormat::Binary,
        Some(other) => {
            problems.bad(format!("output.grid_snapshots must be `none`, `csv` or `binary`, got `{other}`"));
            SnapshotFormat::None
        }
    };
    let dir = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| raw.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    OutputSettings {
        dir,
        prefix: raw.prefix.clone().unwrap_or_else(|| "run".to_string()),
        svg: raw.svg.unwrap_or(true),
        snapshots,
    }
}

pub fn validate(mut raw: RawConfig, purpose: Purpose) -> Result<Config, Failure> {
    let mut problems = Problems::default();
    if raw.scenario.is_none() {
        problems.missing("scenario");
    }
    match purpose {
        Purpose::Run if raw.model.is_none() => problems.missing("model"),
        Purpose::Run => {}
        Purpose::Compare => raw.model = Some(ModelKind::FourthOrderConservative),
        Purpose::CrossValidate => raw.model = Some(ModelKind::WignerComoving),
    }
    let initial = raw.initial.clone().unwrap_or_default();
    if raw.initial.is_none() {
        problems.missing("initial");
    } else {
        if initial.mean.is_none() {
            problems.missing("initial.mean");
        }
        if initial.sigma.is_none() {
            problems.missing("initial.sigma");
        }
    }
    if raw.stepper.is_none() {
        problems.missing("stepper");
    }
    let pot_raw = raw.potential.clone().unwrap_or_default();
    let potential = raw.scenario.and_then(|s| potential_for(s, &pot_raw, &mut problems));
    let stepper = raw.stepper.as_ref().and_then(|s| stepper_from(s, &mut problems));
    let hbar = raw.hbar.unwrap_or(1.0);
    if !(hbar > 0.0 && hbar.is_finite()) {
        problems.bad(format!("hbar must be positive, got {hbar}"));
    }
    let scenario = raw.scenario.unwrap_or(ScenarioKind::Custom);
    let grid = grid_from(&raw.grid.clone().unwrap_or_default(), scenario, &mut problems);
    let output = output_from(&raw.output.clone().unwrap_or_default(), &mut problems);

    let mean = initial.mean.as_ref().map(|m| DVector::from_column_slice(m));
    if let Some(m) = &mean {
        if m.is_empty() || m.len() % 2 != 0 {
            problems.bad(format!("initial.mean needs an even, nonzero length, got {}", m.len()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            problems.bad("initial.mean has non-finite entries");
        }
    }
    let sigma = match (&mean, &initial.sigma) {
        (Some(m), Some(rows)) if !m.is_empty() && m.len() % 2 == 0 => matrix_from_rows(rows, m.len(), &mut problems),
        _ => None,
    };

    if let (Some(model), Some(m)) = (raw.model, &mean) {
        let one_dof = m.len() == 2;
        if (model.is_wigner()
            || matches!(model, ModelKind::FourthOrderConservative | ModelKind::FourthOrderNonconservative))
            && !one_dof
        {
            problems.bad(format!("model `{}` needs one degree of freedom", model.name()));
        }
        if scenario == ScenarioKind::Step && purpose != Purpose::Run {
            problems.bad("the step scenario has no moment-model counterpart here");
        } else if scenario == ScenarioKind::Step && !model.is_wigner() {
            problems.bad("the step scenario needs a Wigner model (`wigner_comoving` or `wigner_lab`)");
        }
        if grid.linearized && (model != ModelKind::WignerComoving || scenario == ScenarioKind::Step) {
            problems.bad("grid.linearized applies to `wigner_comoving` with a smooth potential");
        }
    }
    let closure_order = raw.closure_order.unwrap_or(match scenario {
        ScenarioKind::Harmonic => 2,
        _ => 4,
    });
    if let (Some(pot), Some(model)) = (&potential, raw.model) {
        let needs_derivatives = !model.is_wigner() && !pot.is_step();
        if needs_derivatives && closure_order + 1 > pot.derivative_order() {
            problems.bad(format!(
                "closure_order {closure_order} needs {} potential derivatives; potential.derivative_order is {}",
                closure_order + 1,
                pot.derivative_order()
            ));
        }
        if matches!(model, ModelKind::FourthOrderConservative | ModelKind::FourthOrderNonconservative)
            && pot.derivative_order() < 5
        {
            problems.bad("fourth-order models need potential.derivative_order ≥ 5");
        }
    }

    if !problems.0.is_empty() {
        return Err(Failure::validation(format!("invalid config:\n{problems}")));
    }
    let covariance = Covariance::new(sigma.expect("validated"), hbar)
        .map_err(|e| Failure::validation(format!("initial.sigma: {e}")))?;
    if raw.check_admissibility.unwrap_or(true) {
        let ok = uncertainty_admissible(&covariance).map_err(|e| Failure::validation(format!("initial.sigma: {e}")))?;
        if !ok {
            let nu = qmoments::model::symplectic_eigenvalues(covariance.sigma()).unwrap_or_default();
            let smallest = nu.first().copied().unwrap_or(f64::NAN);
            return Err(Failure::validation(format!(
                "Williamson criterion violated: smallest symplectic eigenvalue of ħΣ is {:.6}·ħ, below ħ/2",
                smallest
            )));
        }
    }
    Ok(Config {
        scenario,
        model: raw.model.expect("validated"),
        potential: potential.expect("validated"),
        closure_order,
        hbar,
        mean: mean.expect("validated"),
        covariance,
        stepper: stepper.expect("validated"),
        grid,
        output,
    })
}
