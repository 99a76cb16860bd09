//! Gaussian moment flows.
//!
//! For a total energy `H(z, X)` the moment bracket generates
//!
//! ```text
//! ż = J H_z + J H_X z
//! Ẋ = J H_X X − X H_X J + ½ (J H_z zᵀ − z H_zᵀ J)
//! ```
//!
//! and for `h(z, Σ)` with `Σ = 2X − zzᵀ` the covariance bracket gives
//!
//! ```text
//! ż = J h_z
//! Σ̇ = 2 (J h_Σ Σ − Σ h_Σ J)
//! ```
//!
//! Both matrix equations are written in the form that keeps `Ẋ` and `Σ̇`
//! symmetric; they are checked entrywise against the brackets in the tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::functional::{gradient_of, Gradient, Observable, DEFAULT_FD_STEP};
use crate::model::{symmetrize, symmetry_defect, Covariance, PhaseVector, SecondMoment, SymplecticForm, SYMMETRY_TOL};
use crate::potential::{normal_cdf, normal_pdf, Potential, PotentialKind};

/// Mean and second moment at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState {
    pub z: DVector<f64>,
    pub x: DMatrix<f64>,
    pub t: f64,
}

impl MomentState {
    pub fn new(z: &PhaseVector, x: &SecondMoment, t: f64) -> Result<Self> {
        if x.matrix().nrows() != z.vector().len() {
            return Err(Error::Dimension { expected: z.vector().len(), got: x.matrix().nrows() });
        }
        let state = Self { z: z.vector().clone(), x: x.matrix().clone(), t };
        state.check_admissible()?;
        Ok(state)
    }

    /// State with mean `z` and physical covariance `ħΣ`.
    pub fn from_covariance(z: &PhaseVector, cov: &Covariance, t: f64) -> Result<Self> {
        let x = SecondMoment::from_mean_and_covariance(z.vector(), &cov.physical())?;
        Self::new(z, &x, t)
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// `Σ = 2X − zzᵀ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        &self.x * 2.0 - &self.z * self.z.transpose()
    }

    pub fn check_admissible(&self) -> Result<()> {
        if self.covariance().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(())
    }

    /// Flat layout used by the integrators: `z` followed by `X` column-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.z.iter().chain(self.x.iter()).copied().collect()
    }

    pub fn from_flat(dim: usize, flat: &[f64], t: f64) -> Self {
        Self {
            z: DVector::from_column_slice(&flat[..dim]),
            x: DMatrix::from_column_slice(dim, dim, &flat[dim..dim + dim * dim]),
            t,
        }
    }
}

/// Gaussian closure of `Σ_i p_i²/2 + V(q_i)`: the potential is Taylor
/// expanded to `truncation_order` about the mean and averaged over the
/// Gaussian, using `⟨q̃^{2k}⟩ = (2k−1)!! σ^k` and vanishing odd moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureSpec {
    pub potential: Potential,
    pub truncation_order: usize,
    /// Keep the bracket-derived terms in the explicit fourth-order system.
    pub conservative: bool,
}

impl ClosureSpec {
    pub fn new(potential: Potential, truncation_order: usize) -> Result<Self> {
        if !potential.is_step() && truncation_order > potential.derivative_order() {
            return Err(Error::DerivativeUnavailable {
                requested: truncation_order,
                available: potential.derivative_order(),
            });
        }
        Ok(Self { potential, truncation_order, conservative: true })
    }

    /// Odd truncations conserve energy even without the bracket-derived terms.
    pub fn is_odd_truncation(&self) -> bool {
        self.truncation_order % 2 == 1
    }

    pub fn energy(&self) -> GaussianEnergy {
        GaussianEnergy { spec: self.clone() }
    }
}

/// `(2k−1)!!/(2k)! = 1/(2^k k!)`.
fn closure_coefficient(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc / (2.0 * i as f64))
}

/// The closed energy as a functional of `(z, Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEnergy {
    spec: ClosureSpec,
}

impl GaussianEnergy {
    pub fn spec(&self) -> &ClosureSpec {
        &self.spec
    }

    /// Potential part of one degree of freedom and its `(∂/∂q, ∂/∂σ_qq)`.
    fn potential_term(&self, q: f64, var: f64, want_grad: bool) -> Result<(f64, f64, f64)> {
        let pot = &self.spec.potential;
        if let PotentialKind::Step { height } = *pot.kind() {
            if var <= 0.0 {
                return Ok((pot.value(q)?, 0.0, 0.0));
            }
            let s = var.sqrt();
            let u = q / s;
            let dens = height * normal_pdf(u);
            return Ok((height * normal_cdf(u), dens / s, -dens * q / (2.0 * var * s)));
        }
        let n = self.spec.truncation_order;
        let top = if want_grad { n + 1 } else { n };
        let d = pot.derivatives_upto(top, q)?;
        let (mut v, mut dq, mut dvar) = (0.0, 0.0, 0.0);
        for k in 0..=n / 2 {
            let c = closure_coefficient(k);
            v += d[2 * k] * c * var.powi(k as i32);
            if want_grad {
                dq += d[2 * k + 1] * c * var.powi(k as i32);
                if k >= 1 {
                    dvar += d[2 * k] * c * k as f64 * var.powi(k as i32 - 1);
                }
            }
        }
        Ok((v, dq, dvar))
    }

    pub fn evaluate(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
        let n = z.len() / 2;
        let mut h = 0.0;
        for i in 0..n {
            let (p, spp) = (z[n + i], sigma[(n + i, n + i)]);
            h += 0.5 * p * p + 0.5 * spp;
            h += self.potential_term(z[i], sigma[(i, i)], false)?.0;
        }
        Ok(h)
    }

    pub fn try_gradient(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Gradient> {
        let n = z.len() / 2;
        let mut g = Gradient::zeros(2 * n, true);
        for i in 0..n {
            let (_, dq, dvar) = self.potential_term(z[i], sigma[(i, i)], true)?;
            g.z[i] = dq;
            g.z[n + i] = z[n + i];
            g.m[(i, i)] = dvar;
            g.m[(n + i, n + i)] = 0.5;
        }
        Ok(g)
    }

    /// The same energy expressed in `(z, X)`.
    pub fn in_moments(self) -> InMoments<Self> {
        InMoments(self)
    }
}

impl Observable for GaussianEnergy {
    fn value(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> f64 {
        self.evaluate(z, sigma).unwrap_or(f64::NAN)
    }

    fn gradient(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> Option<Gradient> {
        self.try_gradient(z, sigma).ok()
    }
}

/// `gaussian_energy`: closed total energy of a moment state.
pub fn gaussian_energy(spec: &ClosureSpec, state: &MomentState) -> Result<f64> {
    spec.energy().evaluate(&state.z, &state.covariance())
}

/// Re-expresses a functional of `(z, Σ)` as a functional of `(z, X)`
/// through `Σ = 2X − zzᵀ`: `H_X = 2h_Σ`, `H_z = h_z − 2h_Σ z`.
#[derive(Debug, Clone)]
pub struct InMoments<F>(pub F);

impl<F: Observable> Observable for InMoments<F> {
    fn value(&self, z: &DVector<f64>, x: &DMatrix<f64>) -> f64 {
        self.0.value(z, &(x * 2.0 - z * z.transpose()))
    }

    fn gradient(&self, z: &DVector<f64>, x: &DMatrix<f64>) -> Option<Gradient> {
        let sigma = x * 2.0 - z * z.transpose();
        let g = self.0.gradient(z, &sigma)?;
        Some(Gradient { z: &g.z - &g.m * z * 2.0, m: g.m * 2.0 })
    }
}

fn checked_gradient(h: &dyn Observable, z: &DVector<f64>, m: &DMatrix<f64>) -> Result<Gradient> {
    let (g, _) = gradient_of(h, z, m, DEFAULT_FD_STEP)?;
    if g.m.nrows() != z.len() || g.z.len() != z.len() {
        return Err(Error::Dimension { expected: z.len(), got: g.m.nrows() });
    }
    let defect = symmetry_defect(&g.m);
    if defect > SYMMETRY_TOL {
        return Err(Error::Asymmetric(defect));
    }
    if g.z.iter().chain(g.m.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("energy gradient"));
    }
    Ok(g)
}

/// Right-hand side of the `(z, X)` flow generated by `h`.
pub fn moment_rhs(h: &dyn Observable, z: &DVector<f64>, x: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let j = SymplecticForm::for_dim(z.len())?;
    let j = j.matrix();
    let g = checked_gradient(h, z, x)?;
    let dz = j * (&g.z + &g.m * z);
    let jhz = j * &g.z;
    let dx = j * &g.m * x - x * &g.m * j + (&jhz * z.transpose() + z * jhz.transpose()) * 0.5;
    Ok((dz, symmetrize(&dx)))
}

/// Right-hand side of the `(z, Σ)` flow generated by `h`.
pub fn covariance_rhs(
    h: &dyn Observable,
    z: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let j = SymplecticForm::for_dim(z.len())?;
    let j = j.matrix();
    let g = checked_gradient(h, z, sigma)?;
    let dz = j * &g.z;
    let a = j * &g.m * sigma;
    let ds = (&a + a.transpose()) * 2.0;
    Ok((dz, symmetrize(&ds)))
}

/// `(⟨Q⟩, ⟨P⟩, ⟨Q²⟩, ⟨P²⟩, ⟨QP⟩_s)` for one degree of freedom, with
/// `⟨QP⟩_s = Σ_qp + ⟨Q⟩⟨P⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveMoments {
    pub q: f64,
    pub p: f64,
    pub q2: f64,
    pub p2: f64,
    pub qp: f64,
}

impl FiveMoments {
    pub fn from_mean_and_covariance(z: &DVector<f64>, sigma: &DMatrix<f64>) -> Self {
        let (q, p) = (z[0], z[1]);
        Self {
            q,
            p,
            q2: sigma[(0, 0)] + q * q,
            p2: sigma[(1, 1)] + p * p,
            qp: 0.5 * (sigma[(0, 1)] + sigma[(1, 0)]) + q * p,
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.q, self.p])
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let c = self.qp - self.q * self.p;
        DMatrix::from_row_slice(2, 2, &[self.q2 - self.q * self.q, c, c, self.p2 - self.p * self.p])
    }

    pub fn position_variance(&self) -> f64 {
        self.q2 - self.q * self.q
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.q, self.p, self.q2, self.p2, self.qp]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { q: v[0], p: v[1], q2: v[2], p2: v[3], qp: v[4] }
    }
}

fn fourth_order_rhs(pot: &Potential, m: &FiveMoments, with_fifth: bool) -> Result<FiveMoments> {
    if pot.derivative_order() < 5 {
        return Err(Error::DerivativeUnavailable { requested: 5, available: pot.derivative_order() });
    }
    let d = pot.derivatives_upto(5, m.q)?;
    let (v1, v2, v3, v4) = (d[1], d[2], d[3], d[4]);
    let v5 = if with_fifth { d[5] } else { 0.0 };
    let s = m.position_variance();
    let c = m.qp - m.q * m.p;
    Ok(FiveMoments {
        q: m.p,
        p: -v1 - 0.5 * v3 * s - 0.125 * v5 * s * s,
        q2: 2.0 * m.qp,
        p2: -2.0 * v1 * m.p - 2.0 * v2 * c - v3 * m.p * s - v4 * c * s - 0.25 * v5 * m.p * s * s,
        qp: m.p2 - v1 * m.q - v2 * s - 0.5 * v3 * m.q * s - 0.5 * v4 * s * s - 0.125 * v5 * m.q * s * s,
    })
}

/// Fourth-order Gaussian closure of `P²/2 + V(Q)`, including the fifth
/// derivative terms that the bracket generates.
pub fn conservative_fourth_order_rhs(pot: &Potential, m: &FiveMoments) -> Result<FiveMoments> {
    fourth_order_rhs(pot, m, true)
}

/// The same system without the `V⁽⁵⁾` terms.
pub fn nonconservative_fourth_order_rhs(pot: &Potential, m: &FiveMoments) -> Result<FiveMoments> {
    fourth_order_rhs(pot, m, false)
}

/// A moment model stepped as a flat vector.
///
/// Layouts: `z` then `X` column-major, `z` then `Σ` column-major, or the
/// five moments `(⟨Q⟩, ⟨P⟩, ⟨Q²⟩, ⟨P²⟩, ⟨QP⟩_s)`. Covariances are physical.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentModel {
    MomentXz(ClosureSpec),
    MomentSigma(ClosureSpec),
    FourthOrder { potential: Potential, conservative: bool },
}

impl MomentModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MomentXz(_) => "moment_xz",
            Self::MomentSigma(_) => "moment_sigma",
            Self::FourthOrder { conservative: true, .. } => "fourth_order_conservative",
            Self::FourthOrder { conservative: false, .. } => "fourth_order_nonconservative",
        }
    }

    /// Flat state for mean `z` and physical covariance `sigma`.
    pub fn initial_state(&self, z: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
        if sigma.nrows() != z.len() || sigma.ncols() != z.len() {
            return Err(Error::Dimension { expected: z.len(), got: sigma.nrows() });
        }
        Ok(match self {
            Self::MomentXz(_) => {
                let x = (sigma + z * z.transpose()) * 0.5;
                z.iter().chain(x.iter()).copied().collect()
            }
            Self::MomentSigma(_) => z.iter().chain(sigma.iter()).copied().collect(),
            Self::FourthOrder { .. } => {
                if z.len() != 2 {
                    return Err(Error::Dimension { expected: 2, got: z.len() });
                }
                FiveMoments::from_mean_and_covariance(z, sigma).to_array().to_vec()
            }
        })
    }

    pub fn state_len(&self, dim: usize) -> usize {
        match self {
            Self::FourthOrder { .. } => 5,
            _ => dim + dim * dim,
        }
    }

    fn dim_of(&self, len: usize) -> usize {
        match self {
            Self::FourthOrder { .. } => 2,
            // len = d + d²
            _ => ((((1 + 4 * len) as f64).sqrt() - 1.0) / 2.0).round() as usize,
        }
    }

    pub fn mean_and_covariance(&self, y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim_of(y.len());
        match self {
            Self::MomentXz(_) => {
                let z = DVector::from_column_slice(&y[..d]);
                let x = DMatrix::from_column_slice(d, d, &y[d..]);
                let sigma = x * 2.0 - &z * z.transpose();
                (z, sigma)
            }
            Self::MomentSigma(_) => (DVector::from_column_slice(&y[..d]), DMatrix::from_column_slice(d, d, &y[d..])),
            Self::FourthOrder { .. } => {
                let m = FiveMoments::from_slice(y);
                (m.mean(), m.covariance())
            }
        }
    }

    /// The energy the model is built from; the fourth-order systems are
    /// measured against the `N = 4` closure.
    pub fn energy(&self, y: &[f64]) -> Result<f64> {
        let (z, sigma) = self.mean_and_covariance(y);
        match self {
            Self::MomentXz(spec) | Self::MomentSigma(spec) => spec.energy().evaluate(&z, &sigma),
            Self::FourthOrder { potential, .. } => {
                ClosureSpec::new(potential.clone(), 4)?.energy().evaluate(&z, &sigma)
            }
        }
    }

    pub fn rhs(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        if y.len() != out.len() {
            return Err(Error::Dimension { expected: y.len(), got: out.len() });
        }
        let d = self.dim_of(y.len());
        match self {
            Self::MomentXz(spec) => {
                let (z, x) = (DVector::from_column_slice(&y[..d]), DMatrix::from_column_slice(d, d, &y[d..]));
                let (dz, dx) = moment_rhs(&spec.energy().in_moments(), &z, &x)?;
                out[..d].copy_from_slice(dz.as_slice());
                out[d..].copy_from_slice(dx.as_slice());
            }
            Self::MomentSigma(spec) => {
                let (z, sg) = (DVector::from_column_slice(&y[..d]), DMatrix::from_column_slice(d, d, &y[d..]));
                let (dz, ds) = covariance_rhs(&spec.energy(), &z, &sg)?;
                out[..d].copy_from_slice(dz.as_slice());
                out[d..].copy_from_slice(ds.as_slice());
            }
            Self::FourthOrder { potential, conservative } => {
                let m = FiveMoments::from_slice(y);
                let dm = if *conservative {
                    conservative_fourth_order_rhs(potential, &m)?
                } else {
                    nonconservative_fourth_order_rhs(potential, &m)?
                };
                out.copy_from_slice(&dm.to_array());
            }
        }
        Ok(())
    }

    /// Header names for the flat state.
    pub fn column_names(&self, dim: usize) -> Vec<String> {
        let n = dim / 2;
        let coord = |i: usize| if i < n { format!("q{i}") } else { format!("p{}", i - n) };
        let coord = |i: usize| if n == 1 { coord(i).trim_end_matches('0').to_string() } else { coord(i) };
        match self {
            Self::FourthOrder { .. } => ["q", "p", "q2", "p2", "qp"].iter().map(|s| s.to_string()).collect(),
            _ => {
                let prefix = if matches!(self, Self::MomentXz(_)) { "x" } else { "cov" };
                let mut names: Vec<String> = (0..dim).map(coord).collect();
                for c in 0..dim {
                    for r in 0..dim {
                        names.push(format!("{prefix}_{}_{}", coord(r), coord(c)));
                    }
                }
                names
            }
        }
    }
}
