//! Evolution of `(z, W̃)` in the frame that moves with the expectation
//! values, plus the lab-frame counterpart.
//!
//! With `⟨·⟩` the grid quadrature normalised by the mass,
//!
//! ```text
//! ż     = J ∇_z ⟨H̃⟩
//! ∂_t W̃ = {{H̃, W̃}} + a · ∇W̃,   a = ⟨{ζ̃, H̃}⟩ = (⟨H̃_p⟩, −⟨H̃_q⟩)
//! ```
//!
//! The counter-term uses the same derivative fields as the transport, so the
//! first moments of `W̃` stay at zero to roundoff whenever `H̃_q` depends on
//! `q̃` alone and `H̃_p` on `p̃` alone.

use super::grid::{gaussian_init, moments, Axis, Frame, GridMoments, WignerGrid, DEFAULT_BOUNDARY_LIMIT};
use super::moyal::{Differentiator, HamiltonianFields, MoyalOrder, ThirdDerivatives};
use super::stencil::Boundary;
use crate::error::{Error, Result};
use crate::functional::DEFAULT_FD_STEP;
use crate::integrate::{integrate_with, IntegrateError, Monitor, Recording, StepperConfig, TrajectoryRecord};
use crate::model::{Covariance, PhaseVector, SecondMoment};
use crate::potential::Potential;

/// `(z, W̃)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComovingState {
    pub grid: WignerGrid,
    pub z: PhaseVector,
    pub t: f64,
}

impl ComovingState {
    pub fn new(grid: WignerGrid, z: PhaseVector, t: f64) -> Result<Self> {
        if grid.frame != Frame::Comoving {
            return Err(Error::InvalidArgument("co-moving state needs a co-moving grid".into()));
        }
        if z.dof() != 1 {
            return Err(Error::Dimension { expected: 2, got: z.vector().len() });
        }
        Ok(Self { grid, z, t })
    }

    /// Gaussian `W̃` centred at the origin of axes spanning `±width`
    /// standard deviations, with the frame origin at `z`.
    pub fn gaussian(z: &PhaseVector, cov: &Covariance, width: f64, n: usize) -> Result<Self> {
        let phys = cov.physical();
        let q = Axis::centred(0.0, width * phys[(0, 0)].sqrt(), n)?;
        let p = Axis::centred(0.0, width * phys[(1, 1)].sqrt(), n)?;
        let grid = gaussian_init(&PhaseVector::zeros(1), cov, q, p, Frame::Comoving)?;
        Self::new(grid, z.clone(), 0.0)
    }

    pub fn origin(&self) -> [f64; 2] {
        [self.z.q(0), self.z.p(0)]
    }

    /// `z` followed by the grid values.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 + self.grid.values.len());
        out.extend_from_slice(&self.origin());
        out.extend_from_slice(&self.grid.values);
        out
    }

    /// Moments of the physical distribution `W(ζ) = W̃(ζ − z)`.
    pub fn physical_moments(&self) -> Result<GridMoments> {
        let m = moments(&self.grid)?;
        let mean = self.z.vector() + m.mean.vector();
        let second = SecondMoment::from_mean_and_covariance(&mean, &m.covariance())?;
        Ok(GridMoments { mass: m.mass, mean: PhaseVector::new(mean)?, second })
    }
}

/// Normalised grid expectation of a sampled field.
pub fn expectation(grid: &WignerGrid, field: &[f64]) -> f64 {
    grid.integrate_field(field) / grid.mass()
}

fn sample(grid: &WignerGrid, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let ps = grid.p.nodes();
    let mut out = Vec::with_capacity(grid.values.len());
    for q in grid.q.nodes() {
        out.extend(ps.iter().map(|&p| f(q, p)));
    }
    out
}

/// A Hamiltonian `H̃(z, ζ̃)` seen from the co-moving frame. In the lab frame
/// the same object is used with `z = 0`.
pub trait ComovingHamiltonian: Send + Sync {
    fn sample(&self, z: [f64; 2], grid: &WignerGrid) -> Result<Vec<f64>>;

    /// `H̃_q`, `H̃_p` and, at order `ħ²`, the third derivatives. Finite
    /// differences of [`sample`](Self::sample) unless overridden.
    fn derivative_fields(
        &self,
        z: [f64; 2],
        grid: &WignerGrid,
        diff: &Differentiator,
        order: MoyalOrder,
    ) -> Result<HamiltonianFields> {
        Ok(diff.fields(&self.sample(z, grid)?, order))
    }

    /// `∇_z ⟨H̃⟩`; central differences in `z` unless overridden.
    fn expectation_gradient(&self, z: [f64; 2], grid: &WignerGrid, _fields: &HamiltonianFields) -> Result<[f64; 2]> {
        let h = DEFAULT_FD_STEP;
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate() {
            let (mut plus, mut minus) = (z, z);
            plus[k] += h;
            minus[k] -= h;
            *gk = (expectation(grid, &self.sample(plus, grid)?) - expectation(grid, &self.sample(minus, grid)?))
                / (2.0 * h);
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularDifference(h));
        }
        Ok(g)
    }
}

/// `H̃ = (p + p̃)²/2 + V(q + q̃)` with analytic derivative fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Translated {
    pub potential: Potential,
}

impl Translated {
    pub fn new(potential: Potential) -> Result<Self> {
        if potential.is_step() {
            return Err(Error::InvalidArgument("use StepHamiltonian for the step potential".into()));
        }
        Ok(Self { potential })
    }
}

impl ComovingHamiltonian for Translated {
    fn sample(&self, z: [f64; 2], grid: &WignerGrid) -> Result<Vec<f64>> {
        let v: Vec<f64> = grid.q.nodes().iter().map(|q| self.potential.value(z[0] + q)).collect::<Result<_>>()?;
        let ps = grid.p.nodes();
        Ok(v.iter().flat_map(|vi| ps.iter().map(move |p| 0.5 * (z[1] + p).powi(2) + vi)).collect())
    }

    fn derivative_fields(
        &self,
        z: [f64; 2],
        grid: &WignerGrid,
        _diff: &Differentiator,
        order: MoyalOrder,
    ) -> Result<HamiltonianFields> {
        let qs = grid.q.nodes();
        let per_q =
            |k: usize| -> Result<Vec<f64>> { qs.iter().map(|q| self.potential.derivative(k, z[0] + q)).collect() };
        let np = grid.p.n;
        let spread = |col: &[f64]| -> Vec<f64> { col.iter().flat_map(|&c| std::iter::repeat_n(c, np)).collect() };
        let h_q = spread(&per_q(1)?);
        let h_p = sample(grid, |_, p| z[1] + p);
        let third = match order {
            MoyalOrder::Classical => None,
            MoyalOrder::Hbar2 => {
                let zero = vec![0.0; h_q.len()];
                Some(ThirdDerivatives { qqq: spread(&per_q(3)?), qqp: zero.clone(), qpp: zero.clone(), ppp: zero })
            }
        };
        Ok(HamiltonianFields { h_q, h_p, third })
    }

    fn expectation_gradient(&self, _z: [f64; 2], grid: &WignerGrid, fields: &HamiltonianFields) -> Result<[f64; 2]> {
        Ok([expectation(grid, &fields.h_q), expectation(grid, &fields.h_p)])
    }
}

/// Linearisation about the mean, `H̃ = h(z) + ζ̃·∇h(z)` with
/// `h = p²/2 + V(q)`: the coherent-state case.
#[derive(Debug, Clone, PartialEq)]
pub struct Coherent {
    pub potential: Potential,
}

impl ComovingHamiltonian for Coherent {
    fn sample(&self, z: [f64; 2], grid: &WignerGrid) -> Result<Vec<f64>> {
        let h = 0.5 * z[1] * z[1] + self.potential.value(z[0])?;
        let force = self.potential.derivative(1, z[0])?;
        Ok(sample(grid, |q, p| h + q * force + p * z[1]))
    }

    fn derivative_fields(
        &self,
        z: [f64; 2],
        grid: &WignerGrid,
        _diff: &Differentiator,
        order: MoyalOrder,
    ) -> Result<HamiltonianFields> {
        let n = grid.values.len();
        let zero = vec![0.0; n];
        Ok(HamiltonianFields {
            h_q: vec![self.potential.derivative(1, z[0])?; n],
            h_p: vec![z[1]; n],
            third: (order == MoyalOrder::Hbar2).then(|| ThirdDerivatives {
                qqq: zero.clone(),
                qqp: zero.clone(),
                qpp: zero.clone(),
                ppp: zero,
            }),
        })
    }

    fn expectation_gradient(&self, z: [f64; 2], grid: &WignerGrid, _fields: &HamiltonianFields) -> Result<[f64; 2]> {
        let m = moments(grid)?;
        Ok([
            self.potential.derivative(1, z[0])? + m.mean.q(0) * self.potential.derivative(2, z[0])?,
            z[1] + m.mean.p(0),
        ])
    }
}

/// `H̃ = (p + p̃)²/2 + μ Θ(q + q̃)`. The transport sees `Θ` smoothed by a
/// hat kernel one node wide on either side, whose quadrature against `W̃`
/// is exactly the linearly interpolated position marginal at `−q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepHamiltonian {
    pub height: f64,
}

impl StepHamiltonian {
    fn smoothed_step(x: f64, width: f64) -> f64 {
        let s = x / width;
        if s <= -1.0 {
            0.0
        } else if s < 0.0 {
            0.5 * (s + 1.0).powi(2)
        } else if s < 1.0 {
            1.0 - 0.5 * (1.0 - s).powi(2)
        } else {
            1.0
        }
    }

    fn hat(x: f64, width: f64) -> f64 {
        (1.0 - (x / width).abs()).max(0.0) / width
    }
}

impl ComovingHamiltonian for StepHamiltonian {
    fn sample(&self, z: [f64; 2], grid: &WignerGrid) -> Result<Vec<f64>> {
        let dq = grid.q.spacing();
        Ok(sample(grid, |q, p| 0.5 * (z[1] + p).powi(2) + self.height * Self::smoothed_step(z[0] + q, dq)))
    }

    /// Third derivatives, if requested, are differences of the kernel field.
    fn derivative_fields(
        &self,
        z: [f64; 2],
        grid: &WignerGrid,
        diff: &Differentiator,
        order: MoyalOrder,
    ) -> Result<HamiltonianFields> {
        let dq = grid.q.spacing();
        let h_q = sample(grid, |q, _| self.height * Self::hat(z[0] + q, dq));
        let h_p = sample(grid, |_, p| z[1] + p);
        let third = (order == MoyalOrder::Hbar2).then(|| {
            let zero = vec![0.0; h_q.len()];
            ThirdDerivatives { qqq: diff.field_dq(&h_q, 2), qqp: zero.clone(), qpp: zero.clone(), ppp: zero }
        });
        Ok(HamiltonianFields { h_q, h_p, third })
    }

    fn expectation_gradient(&self, z: [f64; 2], grid: &WignerGrid, _fields: &HamiltonianFields) -> Result<[f64; 2]> {
        let force = self.height * grid.position_marginal_at(-z[0])? / grid.mass();
        Ok([force, z[1] + moments(grid)?.mean.p(0)])
    }
}

/// Any `H(q, p)` evaluated at `z + ζ̃`; all derivatives by differences.
pub struct Sampled<F>(pub F);

impl<F: Fn(f64, f64) -> f64 + Send + Sync> ComovingHamiltonian for Sampled<F> {
    fn sample(&self, z: [f64; 2], grid: &WignerGrid) -> Result<Vec<f64>> {
        let out = sample(grid, |q, p| (self.0)(z[0] + q, z[1] + p));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampled Hamiltonian"));
        }
        Ok(out)
    }
}

/// Right-hand side of the co-moving system with fixed order and guard.
#[derive(Debug, Clone)]
pub struct ComovingFlow {
    diff: Differentiator,
    pub order: MoyalOrder,
    pub boundary_limit: f64,
}

impl ComovingFlow {
    pub fn new(grid: &WignerGrid, order: MoyalOrder) -> Result<Self> {
        Ok(Self {
            diff: Differentiator::new(grid, Boundary::default())?,
            order,
            boundary_limit: DEFAULT_BOUNDARY_LIMIT,
        })
    }

    pub fn with_boundary(mut self, boundary: Boundary, grid: &WignerGrid) -> Result<Self> {
        self.diff = Differentiator::new(grid, boundary)?;
        Ok(self)
    }

    pub fn with_boundary_limit(mut self, limit: f64) -> Self {
        self.boundary_limit = limit;
        self
    }

    /// `(ż, ∂_t W̃)`.
    pub fn rhs(&self, h: &dyn ComovingHamiltonian, z: [f64; 2], grid: &WignerGrid) -> Result<([f64; 2], Vec<f64>)> {
        if !self.diff.matches(grid) {
            return Err(Error::Dimension { expected: grid.values.len(), got: 0 });
        }
        grid.check_boundary(self.boundary_limit)?;
        let fields = h.derivative_fields(z, grid, &self.diff, self.order)?;
        let shift = [expectation(grid, &fields.h_q), expectation(grid, &fields.h_p)];
        let dw = self.diff.transport(&fields, shift, &grid.values, grid.hbar, self.order)?;
        let g = h.expectation_gradient(z, grid, &fields)?;
        Ok(([g[1], -g[0]], dw))
    }

    /// `∂_t W = {{H, W}}` with `H` the given Hamiltonian at `z = 0`.
    pub fn lab_rhs(&self, h: &dyn ComovingHamiltonian, grid: &WignerGrid) -> Result<Vec<f64>> {
        grid.check_boundary(self.boundary_limit)?;
        let fields = h.derivative_fields([0.0; 2], grid, &self.diff, self.order)?;
        self.diff.transport(&fields, [0.0; 2], &grid.values, grid.hbar, self.order)
    }
}

/// One evaluation of the co-moving right-hand side.
pub fn comoving_step_rhs(
    state: &ComovingState,
    h: &dyn ComovingHamiltonian,
    order: MoyalOrder,
) -> Result<([f64; 2], Vec<f64>)> {
    ComovingFlow::new(&state.grid, order)?.rhs(h, state.origin(), &state.grid)
}

/// Unit mass against a step of height `μ` at the origin, classical
/// transport: `q̇ = p + ⟨p̃⟩`, `ṗ = −μ m(−q)` with `m` the position marginal
/// of `W̃`.
pub fn step_potential_scenario(mu: f64, state: &ComovingState) -> Result<([f64; 2], Vec<f64>)> {
    let target = -state.z.q(0);
    let axis = &state.grid.q;
    let h = axis.spacing();
    if !(target > axis.min + h && target < axis.max - h) {
        return Err(Error::OutsideGrid(target));
    }
    comoving_step_rhs(state, &StepHamiltonian { height: mu }, MoyalOrder::Classical)
}

/// Columns recorded for grid runs: the frame origin, the physical mean,
/// the covariance and the mass.
pub const GRID_COLUMNS: [&str; 8] = ["z_q", "z_p", "mean_q", "mean_p", "cov_qq", "cov_qp", "cov_pp", "mass"];

fn project(template: &WignerGrid, origin: [f64; 2], values: &[f64]) -> Vec<f64> {
    let grid = template.with_values(values.to_vec());
    match moments(&grid) {
        Ok(m) => {
            let c = m.covariance();
            vec![
                origin[0],
                origin[1],
                origin[0] + m.mean.q(0),
                origin[1] + m.mean.p(0),
                c[(0, 0)],
                c[(0, 1)],
                c[(1, 1)],
                m.mass,
            ]
        }
        Err(_) => vec![f64::NAN; GRID_COLUMNS.len()],
    }
}

/// A finished grid run: per-step moments and the final state.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub record: TrajectoryRecord,
    pub final_grid: WignerGrid,
    pub final_origin: [f64; 2],
}

fn energy_of(h: &dyn ComovingHamiltonian, z: [f64; 2], grid: &WignerGrid) -> f64 {
    h.sample(z, grid).map(|s| expectation(grid, &s)).unwrap_or(f64::NAN)
}

/// Integrates the co-moving system, recording [`GRID_COLUMNS`] and the
/// monitors `energy` (`⟨H̃⟩`) and `pinning` (`|⟨ζ̃⟩|`).
pub fn evolve_comoving(
    flow: &ComovingFlow,
    h: &dyn ComovingHamiltonian,
    initial: &ComovingState,
    cfg: &StepperConfig,
) -> std::result::Result<GridRun, IntegrateError> {
    let template = initial.grid.clone();
    let mut rhs = |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let grid = template.with_values(y[2..].to_vec());
        let (dz, dw) = flow.rhs(h, [y[0], y[1]], &grid)?;
        out[..2].copy_from_slice(&dz);
        out[2..].copy_from_slice(&dw);
        Ok(())
    };
    let monitors = [
        Monitor::new("energy", |_, y: &[f64]| energy_of(h, [y[0], y[1]], &template.with_values(y[2..].to_vec()))),
        Monitor::new("pinning", |_, y: &[f64]| {
            moments(&template.with_values(y[2..].to_vec())).map(|m| m.mean.vector().norm()).unwrap_or(f64::NAN)
        }),
    ];
    let recording = Recording::Projected(Box::new(|y: &[f64]| project(&template, [y[0], y[1]], &y[2..])));
    let cfg = StepperConfig { t0: initial.t, ..*cfg };
    let record = integrate_with(&mut rhs, &initial.to_flat(), &cfg, &monitors, &recording)?;
    let y = &record.final_state;
    Ok(GridRun { final_grid: template.with_values(y[2..].to_vec()), final_origin: [y[0], y[1]], record })
}

/// Integrates `∂_t W = {{H, W}}` in the lab frame, recording
/// [`GRID_COLUMNS`] (with a zero origin) and the monitor `energy`.
pub fn evolve_lab(
    flow: &ComovingFlow,
    h: &dyn ComovingHamiltonian,
    initial: &WignerGrid,
    cfg: &StepperConfig,
) -> std::result::Result<GridRun, IntegrateError> {
    let template = initial.clone();
    let mut rhs = |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        out.copy_from_slice(&flow.lab_rhs(h, &template.with_values(y.to_vec()))?);
        Ok(())
    };
    let monitors = [Monitor::new("energy", |_, y: &[f64]| energy_of(h, [0.0; 2], &template.with_values(y.to_vec())))];
    let recording = Recording::Projected(Box::new(|y: &[f64]| project(&template, [0.0; 2], y)));
    let record = integrate_with(&mut rhs, &initial.values, cfg, &monitors, &recording)?;
    Ok(GridRun { final_grid: template.with_values(record.final_state.clone()), final_origin: [0.0; 2], record })
}
