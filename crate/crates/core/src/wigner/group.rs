//! Action of symplectic maps and phase-space translations on sampled
//! Wigner functions.

use nalgebra::{DMatrix, Matrix2, Vector2};

use super::grid::WignerGrid;
use crate::error::{Error, Result};

/// Largest defect `‖SᵀJS − J‖` accepted for the linear part.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// Default limit on the share of `∫|W|` mapped outside the target domain.
pub const DEFAULT_CLIP_LIMIT: f64 = 1e-6;

/// `(S, z₀, φ)`: a symplectic matrix, a shift and a phase. The phase does
/// not act on Wigner functions and is only carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupElement {
    pub s: Matrix2<f64>,
    pub shift: Vector2<f64>,
    pub phase: f64,
}

impl GroupElement {
    pub fn new(s: Matrix2<f64>, shift: Vector2<f64>, phase: f64) -> Result<Self> {
        let j = Matrix2::new(0.0, 1.0, -1.0, 0.0);
        let defect = (s.transpose() * j * s - j).norm();
        if defect.is_nan() || defect >= SYMPLECTIC_TOL {
            return Err(Error::InvalidArgument(format!("matrix is not symplectic (defect {defect:.3e})")));
        }
        if !shift.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("group shift"));
        }
        Ok(Self { s, shift, phase })
    }

    pub fn identity() -> Self {
        Self { s: Matrix2::identity(), shift: Vector2::zeros(), phase: 0.0 }
    }

    pub fn translation(a: f64, b: f64) -> Self {
        Self { s: Matrix2::identity(), shift: Vector2::new(a, b), phase: 0.0 }
    }

    pub fn rotation(angle: f64) -> Self {
        let (sn, c) = angle.sin_cos();
        Self { s: Matrix2::new(c, -sn, sn, c), shift: Vector2::zeros(), phase: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.s == Matrix2::identity() && self.shift == Vector2::zeros()
    }

    /// Mean after the pullback: `S⁻¹(mean − z₀)`.
    pub fn transform_mean(&self, mean: &Vector2<f64>) -> Vector2<f64> {
        self.inverse_s() * (mean - self.shift)
    }

    /// Covariance after the pullback: `S⁻¹ Σ S⁻ᵀ`.
    pub fn transform_covariance(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let inv = self.inverse_s();
        let c = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
        let out = inv * c * inv.transpose();
        DMatrix::from_row_slice(2, 2, out.as_slice()).transpose()
    }

    fn inverse_s(&self) -> Matrix2<f64> {
        // det S = 1
        Matrix2::new(self.s[(1, 1)], -self.s[(0, 1)], -self.s[(1, 0)], self.s[(0, 0)])
    }
}

fn bilinear(grid: &WignerGrid, q: f64, p: f64) -> Option<f64> {
    let sq = grid.q.locate(q)?;
    let sp = grid.p.locate(p)?;
    let i = (sq.floor() as usize).min(grid.q.n - 2);
    let j = (sp.floor() as usize).min(grid.p.n - 2);
    let (fq, fp) = (sq - i as f64, sp - j as f64);
    Some(
        (1.0 - fq) * ((1.0 - fp) * grid.at(i, j) + fp * grid.at(i, j + 1))
            + fq * ((1.0 - fp) * grid.at(i + 1, j) + fp * grid.at(i + 1, j + 1)),
    )
}

/// `(g W)(ζ) = W(Sζ + z₀)` on the same grid, by bilinear interpolation.
/// Fails if more than `clip_limit` of `∫|W|` would land outside the grid.
pub fn group_action_with(g: &GroupElement, grid: &WignerGrid, clip_limit: f64) -> Result<WignerGrid> {
    if g.is_identity() {
        return Ok(grid.clone());
    }
    let inv = g.inverse_s();
    let (qs, ps) = (grid.q.nodes(), grid.p.nodes());
    let mut clipped = 0.0;
    let mut total = 0.0;
    for (i, &q) in qs.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let w = grid.q.weight(i) * grid.p.weight(j) * grid.at(i, j).abs();
            total += w;
            let image = inv * (Vector2::new(q, p) - g.shift);
            if grid.q.locate(image[0]).is_none() || grid.p.locate(image[1]).is_none() {
                clipped += w;
            }
        }
    }
    let fraction = if total > 0.0 { clipped / total } else { 0.0 };
    if fraction > clip_limit {
        return Err(Error::BoundaryMass { fraction, limit: clip_limit });
    }
    let mut values = Vec::with_capacity(grid.values.len());
    for &q in &qs {
        for &p in &ps {
            let src = g.s * Vector2::new(q, p) + g.shift;
            values.push(bilinear(grid, src[0], src[1]).unwrap_or(0.0));
        }
    }
    Ok(grid.with_values(values))
}

pub fn group_action(g: &GroupElement, grid: &WignerGrid) -> Result<WignerGrid> {
    group_action_with(g, grid, DEFAULT_CLIP_LIMIT)
}
