//! One-dimensional potentials with analytic derivatives.

use libm::erfc;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default number of analytic derivatives exposed by smooth potentials.
pub const DEFAULT_DERIVATIVE_ORDER: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `k q²/2`
    Harmonic {
        k: f64,
    },
    /// `λ q⁴/4`
    Quartic {
        lambda: f64,
    },
    /// `D (1 − e^{−a q})²`
    Morse {
        depth: f64,
        width: f64,
    },
    /// `μ Θ(q)`
    Step {
        height: f64,
    },
    /// `Σ c_i q^i`
    Polynomial {
        coeffs: Vec<f64>,
    },
    Tabulated(TabulatedPotential),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    kind: PotentialKind,
    derivative_order: usize,
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Self {
        let derivative_order = match kind {
            PotentialKind::Step { .. } => 0,
            _ => DEFAULT_DERIVATIVE_ORDER,
        };
        Self { kind, derivative_order }
    }

    pub fn harmonic(k: f64) -> Self {
        Self::new(PotentialKind::Harmonic { k })
    }

    pub fn quartic(lambda: f64) -> Self {
        Self::new(PotentialKind::Quartic { lambda })
    }

    pub fn morse(depth: f64, width: f64) -> Self {
        Self::new(PotentialKind::Morse { depth, width })
    }

    pub fn step(height: f64) -> Self {
        Self::new(PotentialKind::Step { height })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(PotentialKind::Polynomial { coeffs })
    }

    pub fn tabulated(table: TabulatedPotential) -> Self {
        Self::new(PotentialKind::Tabulated(table))
    }

    /// Raise or lower the number of derivatives callers may request.
    /// The step potential stays at order zero.
    pub fn with_derivative_order(mut self, order: usize) -> Self {
        if !self.is_step() {
            self.derivative_order = order;
        }
        self
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn derivative_order(&self) -> usize {
        self.derivative_order
    }

    pub fn is_step(&self) -> bool {
        matches!(self.kind, PotentialKind::Step { .. })
    }

    pub fn value(&self, q: f64) -> Result<f64> {
        self.derivative(0, q)
    }

    /// `V⁽ᵏ⁾(q)`, evaluated in closed form.
    pub fn derivative(&self, k: usize, q: f64) -> Result<f64> {
        if !q.is_finite() {
            return Err(Error::NonFinite("potential argument"));
        }
        if let PotentialKind::Step { height } = self.kind {
            if k > 0 {
                return Err(Error::StepDerivative(k));
            }
            return Ok(height * heaviside(q));
        }
        if k > self.derivative_order {
            return Err(Error::DerivativeUnavailable { requested: k, available: self.derivative_order });
        }
        Ok(match &self.kind {
            PotentialKind::Harmonic { k: stiffness } => match k {
                0 => 0.5 * stiffness * q * q,
                1 => stiffness * q,
                2 => *stiffness,
                _ => 0.0,
            },
            PotentialKind::Quartic { lambda } => match k {
                0 => 0.25 * lambda * q.powi(4),
                1 => lambda * q.powi(3),
                2 => 3.0 * lambda * q * q,
                3 => 6.0 * lambda * q,
                4 => 6.0 * lambda,
                _ => 0.0,
            },
            PotentialKind::Morse { depth, width } => {
                let e = (-width * q).exp();
                if k == 0 {
                    depth * (1.0 - e).powi(2)
                } else {
                    // D(1 − 2e^{−aq} + e^{−2aq}) differentiated term by term
                    let kk = k as i32;
                    depth * (-2.0 * (-width).powi(kk) * e + (-2.0 * width).powi(kk) * e * e)
                }
            }
            PotentialKind::Polynomial { coeffs } => polynomial_derivative(coeffs, k, q),
            PotentialKind::Tabulated(table) => table.derivative(k, q),
            PotentialKind::Step { .. } => unreachable!(),
        })
    }

    /// `V⁽⁰⁾..V⁽ᵐᵃˣ⁾` at `q` in one call.
    pub fn derivatives_upto(&self, max: usize, q: f64) -> Result<Vec<f64>> {
        (0..=max).map(|k| self.derivative(k, q)).collect()
    }

    /// `⟨V(q + q̃)⟩` over a centred normal `q̃` of variance `var`, for the step kind.
    pub fn step_expectation(&self, q: f64, var: f64) -> Result<f64> {
        match self.kind {
            PotentialKind::Step { height } => {
                if var <= 0.0 {
                    Ok(height * heaviside(q))
                } else {
                    Ok(height * normal_cdf(q / var.sqrt()))
                }
            }
            _ => Err(Error::InvalidArgument("smeared expectation is only defined for the step".into())),
        }
    }
}

pub(crate) fn heaviside(q: f64) -> f64 {
    if q > 0.0 {
        1.0
    } else if q < 0.0 {
        0.0
    } else {
        0.5
    }
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn polynomial_derivative(coeffs: &[f64], k: usize, q: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(k)
        .map(|(i, &c)| {
            let falling: f64 = ((i - k + 1)..=i).map(|v| v as f64).product();
            c * falling * q.powi((i - k) as i32)
        })
        .sum()
}

/// Smooth interpolant of tabulated samples on a uniform grid, built from
/// Gaussian radial basis functions of width equal to the node spacing, so
/// that every derivative is available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPotential {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    width: f64,
}

impl TabulatedPotential {
    pub fn new(q_min: f64, q_max: f64, values: &[f64]) -> Result<Self> {
        if values.len() < 2 || q_max.partial_cmp(&q_min) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::InvalidArgument(
                "tabulated potential needs two or more nodes on a nonempty range".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tabulated potential"));
        }
        let n = values.len();
        let width = (q_max - q_min) / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| q_min + width * i as f64).collect();
        let kernel = DMatrix::from_fn(n, n, |i, j| {
            let x = (nodes[i] - nodes[j]) / width;
            (-0.5 * x * x).exp()
        });
        let chol = kernel.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let weights = chol.solve(&DVector::from_column_slice(values));
        Ok(Self { nodes, weights: weights.iter().copied().collect(), width })
    }

    /// Samples `f` at `n` uniform nodes.
    pub fn from_fn(q_min: f64, q_max: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (q_max - q_min) / (n.max(2) - 1) as f64;
        let values: Vec<f64> = (0..n).map(|i| f(q_min + h * i as f64)).collect();
        Self::new(q_min, q_max, &values)
    }

    pub fn derivative(&self, k: usize, q: f64) -> f64 {
        let scale = self.width.powi(-(k as i32)) * if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| {
                let x = (q - c) / self.width;
                w * hermite_he(k, x) * (-0.5 * x * x).exp()
            })
            .sum::<f64>()
            * scale
    }
}

/// Probabilists' Hermite polynomial `He_k(x)`.
fn hermite_he(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for n in 1..k {
        let next = x * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}
